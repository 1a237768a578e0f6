use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use bcseg_core::augment::{build_bank, export_training_pairs, touching_augment, MANIFEST_FILE};
use bcseg_core::bordercore::{decode_streaming, encode};
use bcseg_core::classical::{split_particle, threshwater, SplitRequest, ThreshWaterParams};
use bcseg_core::infer::{
    run_inference, InferenceConfig, OraclePredictor, PatchPredictor, ThreshWaterPredictor,
};
use bcseg_core::metrics::evaluate;
use bcseg_core::preprocess::{resample_nearest, GlobalStats, SizeNormSpec, StatsAccumulator};
use bcseg_core::synth::{generate, measure, PhantomSpec};
use bcseg_core::volume::{import_raw, read_blockstore, write_blockstore, AnyVolume, BlockStore, Endianness};
use bcseg_core::{Error, LabelVolume, Result, ScalarVolume, VolumeKind, VolumeMeta};
use log::info;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::args::*;

#[derive(Serialize)]
struct RunConfig<'a> {
    command: &'static str,
    version: &'static str,
    threads: Option<usize>,
    log_level: &'a str,
    seed: Option<u64>,
    args: &'a Command,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("serialisable value");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// A closed standard output (e.g. piped into `head`) is not an error.
fn print_json<T: Serialize + ?Sized>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("serialisable value");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

/// Stores get the echo inside; plain files get it in their directory.
fn echo_config(cli: &Cli, primary: &Path) -> Result<()> {
    let path = if primary.is_dir() {
        primary.join("run_config.json")
    } else {
        match primary.parent().filter(|d| !d.as_os_str().is_empty()) {
            Some(d) => d.join("run_config.json"),
            None => PathBuf::from("run_config.json"),
        }
    };
    write_json(
        &path,
        &RunConfig {
            command: cli.command.name(),
            version: env!("CARGO_PKG_VERSION"),
            threads: cli.threads,
            log_level: &cli.log_level,
            seed: cli.command.seed(),
            args: &cli.command,
        },
    )
}

fn open(path: &Path, kind: VolumeKind) -> Result<BlockStore> {
    let store = BlockStore::open(path)?;
    if store.kind() != kind {
        return Err(Error::Argument(format!(
            "{} holds a {:?} volume, expected {:?}",
            path.display(),
            store.kind(),
            kind
        )));
    }
    Ok(store)
}

fn read_scalar(path: &Path) -> Result<(ScalarVolume, BlockStore)> {
    let store = open(path, VolumeKind::Scalar)?;
    Ok((store.read_all()?, store))
}

fn read_labels(path: &Path) -> Result<(LabelVolume, BlockStore)> {
    let store = open(path, VolumeKind::Label)?;
    Ok((store.read_all()?, store))
}

fn read_stats(path: &Path) -> Result<GlobalStats> {
    let s: GlobalStats = read_json(path)?;
    s.validate()?;
    Ok(s)
}

fn size_spec(reference: f64, target: f64) -> Result<SizeNormSpec> {
    let s = SizeNormSpec {
        reference_particle_size_vox: reference,
        target_particle_size_vox: target,
    };
    s.scale()?;
    Ok(s)
}

pub fn run(cli: &Cli) -> Result<()> {
    info!("{} with {} worker thread(s)", cli.command.name(), rayon::current_num_threads());
    match &cli.command {
        Command::Import(a) => import(cli, a),
        Command::Synth(a) => synth(cli, a),
        Command::Stats(a) => stats(cli, a),
        Command::Encode(a) => encode_cmd(cli, a),
        Command::Decode(a) => decode_cmd(cli, a),
        Command::Infer(a) => infer(cli, a),
        Command::Threshwater(a) => threshwater_cmd(cli, a),
        Command::Split(a) => split(cli, a),
        Command::Augment(a) => augment(cli, a),
        Command::ExportTrain(a) => export_train(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Measure(a) => measure_cmd(cli, a),
    }
}

fn import(cli: &Cli, a: &ImportArgs) -> Result<()> {
    let meta = VolumeMeta::new(a.shape, a.spacing, a.dtype.parse()?)?
        .with_origin_name(a.raw.display().to_string());
    let endian: Endianness = a.endian.parse()?;
    let vol = import_raw(&a.raw, meta, endian)?;
    write_blockstore(&vol, &a.out, a.chunk)?;
    echo_config(cli, &a.out)?;
    print_json(&json!({ "out": a.out, "shape": vol.shape() }));
    Ok(())
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let mut spec: PhantomSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => PhantomSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.rng_seed = s;
    }
    let (vol, labels) = generate(&spec)?;
    write_blockstore(&vol, &a.out_vol, a.chunk)?;
    write_blockstore(&labels, &a.out_labels, a.chunk)?;
    echo_config(cli, &a.out_vol)?;
    echo_config(cli, &a.out_labels)?;
    print_json(&json!({
        "out_vol": a.out_vol,
        "out_labels": a.out_labels,
        "particles": labels.max_label(),
        "spec": spec,
    }));
    Ok(())
}

fn stats(cli: &Cli, a: &StatsArgs) -> Result<()> {
    let mut acc = StatsAccumulator::new();
    for p in &a.inputs {
        let store = open(p, VolumeKind::Scalar)?;
        for c in store.chunks() {
            let chunk: ScalarVolume = store.read_chunk(c)?;
            acc.push(chunk.data());
        }
    }
    let s = acc.finish()?;
    match &a.out {
        Some(out) => {
            write_json(out, &s)?;
            echo_config(cli, out)?;
        }
        None => print_json(&s),
    }
    Ok(())
}

fn encode_cmd(cli: &Cli, a: &EncodeArgs) -> Result<()> {
    let cfg = a.border.config();
    cfg.validate()?;
    let (labels, store) = read_labels(&a.input)?;
    let sem = encode(&labels, &cfg);
    write_blockstore(&sem, &a.out, store.chunk_shape())?;
    echo_config(cli, &a.out)?;
    print_json(&json!({ "out": a.out, "instances": labels.max_label() }));
    Ok(())
}

fn decode_cmd(cli: &Cli, a: &DecodeArgs) -> Result<()> {
    let cfg = a.border.config();
    cfg.validate()?;
    let store = open(&a.input, VolumeKind::Semantic)?;
    let out = decode_streaming(&store, &cfg, &a.out)?;
    let mut instances = 0u32;
    for c in out.chunks() {
        let cell: LabelVolume = out.read_chunk(c)?;
        instances = instances.max(cell.max_label());
    }
    echo_config(cli, &a.out)?;
    print_json(&json!({ "out": a.out, "instances": instances }));
    Ok(())
}

enum PredictorSpec {
    Oracle(PathBuf),
    ThreshWater(ThreshWaterParams),
}

fn parse_predictor(s: &str) -> Result<PredictorSpec> {
    let bad = || {
        Error::Argument(format!(
            "predictor {s:?} is neither oracle:<labels.store> nor threshwater:<T>[,<opening>,<seed-erosion>]"
        ))
    };
    let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "oracle" if !rest.is_empty() => Ok(PredictorSpec::Oracle(PathBuf::from(rest))),
        "threshwater" => {
            let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
            let threshold: f64 = parts[0].parse().map_err(|_| bad())?;
            let mut p = ThreshWaterParams::new(threshold);
            match parts[..] {
                [_] => {}
                [_, o, e] => {
                    p.opening_radius = o.parse().map_err(|_| bad())?;
                    p.seed_erosion_radius = e.parse().map_err(|_| bad())?;
                }
                _ => return Err(bad()),
            }
            p.validate()?;
            Ok(PredictorSpec::ThreshWater(p))
        }
        _ => Err(bad()),
    }
}

fn infer(cli: &Cli, a: &InferArgs) -> Result<()> {
    let border = a.border.config();
    let stats = read_stats(&a.stats)?;
    let size = size_spec(a.ref_size_vox, a.target_size_vox)?;
    let mut cfg = InferenceConfig::new(stats, size);
    cfg.patch_shape = a.patch;
    cfg.overlap_fraction = a.overlap;
    cfg.chunk_shape = a.chunk;
    cfg.border = border;
    cfg.output_chunk = a.out_chunk;
    let source = open(&a.input, VolumeKind::Scalar)?;
    let predictor: Box<dyn PatchPredictor> = match parse_predictor(&a.predictor)? {
        PredictorSpec::Oracle(p) => {
            let (labels, _) = read_labels(&p)?;
            if labels.shape() != source.shape() {
                return Err(Error::Argument(format!(
                    "oracle labels {:?} do not match the input {:?}",
                    labels.shape(),
                    source.shape()
                )));
            }
            let norm = size.normalized_shape(source.shape())?;
            Box::new(OraclePredictor::new(&resample_nearest(&labels, norm)?, &border))
        }
        PredictorSpec::ThreshWater(params) => Box::new(ThreshWaterPredictor { params, cfg: border }),
    };
    fs::create_dir_all(&a.scratch).map_err(|e| io_err(&a.scratch, e))?;
    let out = run_inference(&source, predictor.as_ref(), &cfg, &a.scratch, &a.out)?;
    echo_config(cli, &a.out)?;
    print_json(&json!({
        "out": a.out,
        "normalized_shape": out.semantic.shape(),
        "chunks": out.plan.chunks.len(),
    }));
    Ok(())
}

fn threshwater_cmd(cli: &Cli, a: &ThreshwaterArgs) -> Result<()> {
    let p = ThreshWaterParams {
        threshold: a.threshold,
        opening_radius: a.opening,
        seed_erosion_radius: a.seed_erosion,
    };
    p.validate()?;
    let (vol, store) = read_scalar(&a.input)?;
    let labels = threshwater(&vol, &p);
    write_blockstore(&labels, &a.out, store.chunk_shape())?;
    echo_config(cli, &a.out)?;
    print_json(&json!({ "out": a.out, "instances": labels.max_label() }));
    Ok(())
}

fn split(cli: &Cli, a: &SplitArgs) -> Result<()> {
    let (labels, store) = read_labels(&a.input)?;
    let req = SplitRequest {
        target_label: a.label,
        markers: read_json(&a.markers)?,
        border_voxels: read_json(&a.border)?,
    };
    let before = labels.max_label();
    let out = split_particle(&labels, &req)?;
    write_blockstore(&out, &a.out, store.chunk_shape())?;
    echo_config(cli, &a.out)?;
    let new: Vec<u32> = (before + 1..=out.max_label()).collect();
    print_json(&json!({ "out": a.out, "new_labels": new }));
    Ok(())
}

fn augment(cli: &Cli, a: &AugmentArgs) -> Result<()> {
    let (vol, store) = read_scalar(&a.vol)?;
    let (labels, _) = read_labels(&a.labels)?;
    let bank = if a.bank.is_empty() {
        build_bank(std::slice::from_ref(&vol), std::slice::from_ref(&labels))?
    } else {
        let mut vs = Vec::new();
        let mut ls = Vec::new();
        for pair in &a.bank {
            let (v, l) = pair.split_once(',').ok_or_else(|| {
                Error::Argument(format!("bank entry {pair:?} is not VOL.store,LABELS.store"))
            })?;
            vs.push(read_scalar(Path::new(v))?.0);
            ls.push(read_labels(Path::new(l))?.0);
        }
        build_bank(&vs, &ls)?
    };
    let out = touching_augment(&vol, &labels, &bank, a.prob, a.seed)?;
    write_blockstore(&out.vol, &a.out_vol, store.chunk_shape())?;
    write_blockstore(&out.labels, &a.out_labels, store.chunk_shape())?;
    echo_config(cli, &a.out_vol)?;
    echo_config(cli, &a.out_labels)?;
    print_json(&json!({ "bank_size": bank.len(), "placement": out.placement }));
    Ok(())
}

fn export_train(cli: &Cli, a: &ExportTrainArgs) -> Result<()> {
    let cfg = a.border.config();
    let stats = read_stats(&a.stats)?;
    let size = size_spec(a.ref_size_vox, a.target_size_vox)?;
    let vs: Vec<ScalarVolume> = a.vol.iter().map(|p| read_scalar(p).map(|r| r.0)).collect::<Result<_>>()?;
    let ls: Vec<LabelVolume> = a.labels.iter().map(|p| read_labels(p).map(|r| r.0)).collect::<Result<_>>()?;
    let manifest = export_training_pairs(&vs, &ls, &cfg, &size, &stats, &a.out)?;
    echo_config(cli, &a.out)?;
    print_json(&json!({ "manifest": a.out.join(MANIFEST_FILE), "pairs": manifest.pairs.len() }));
    Ok(())
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let load = |p: &Path| -> Result<LabelVolume> {
        match read_blockstore(p)? {
            AnyVolume::Label(l) => Ok(l),
            other => Err(Error::Argument(format!(
                "{} holds a {:?} volume, expected Label",
                p.display(),
                other.kind()
            ))),
        }
    };
    let report = evaluate(&load(&a.pred)?, &load(&a.reference)?)?;
    match &a.out {
        Some(out) => {
            write_json(out, &report)?;
            echo_config(cli, out)?;
        }
        None => print_json(&report),
    }
    Ok(())
}

fn triple(v: [usize; 3]) -> String {
    format!("{};{};{}", v[0], v[1], v[2])
}

fn measure_cmd(cli: &Cli, a: &MeasureArgs) -> Result<()> {
    let (labels, _) = read_labels(&a.input)?;
    let rows = measure(&labels);
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            }
            Box::new(fs::File::create(p).map_err(|e| io_err(p, e))?)
        }
        None => Box::new(std::io::stdout().lock()),
    };
    let target = a.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    let csv_err = |e: csv::Error| io_err(&target, std::io::Error::other(e));
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["id", "voxels", "eq_diameter_vox", "bb_lo", "bb_hi"])
        .map_err(csv_err)?;
    for m in &rows {
        w.write_record([
            m.id.to_string(),
            m.voxels.to_string(),
            m.eq_diameter_vox.to_string(),
            triple(m.bb_lo),
            triple(m.bb_hi),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_err(&target, e))?;
    if let Some(out) = &a.out {
        echo_config(cli, out)?;
    }
    Ok(())
}
