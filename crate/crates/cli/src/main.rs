mod bmp;
mod convert;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use poirot::detection::{detect, DetectionConfig};
use poirot::geometry::io::{parse, to_xyz, Format};
use poirot::geometry::{PointCloud, Rotation};
use poirot::model::checkpoint;
use poirot::model::data::{barbell_dataset, cube_sphere_dataset, Sample};
use poirot::model::{evaluate, parse_key_values, train, Model, ModelConfig, Task, TrainConfig};
use poirot::sphere::{make_grid, respond, ResponseConfig};
use poirot::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "poirot", version, about = "Rotation-invariant point-cloud features, training and detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Plain-text `key = value` settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (convert) or directory (other commands).
    #[arg(long)]
    out: PathBuf,
    /// Points kept by convert; downsampled centers `samples` for train.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    bandwidth: Option<usize>,
    /// Exclusion radius as a fraction of the diameter.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    task: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Convert OFF, PLY, XYZ or an intensity grid to a normalized XYZ cloud.
    Convert {
        input: PathBuf,
        /// off, ply, xyz or image; guessed from the extension when omitted.
        #[arg(long)]
        format: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Write the spherical response at one point as CSV, binary and a BMP heat map.
    Respond {
        input: PathBuf,
        /// Index of the viewing point.
        #[arg(long, default_value_t = 0)]
        center: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model and write a checkpoint with per-epoch metrics.
    Train {
        /// Manifest of `path [class]` lines, or `synthetic:<cube-sphere|barbell>:<count>[:<points>[:<seed>]]`.
        #[arg(long)]
        data: String,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: String,
        /// Rotate every test cloud randomly, seeded by this value plus its index.
        #[arg(long)]
        rotate: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Locate the region of a scene that best matches an atlas shape.
    Detect {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        atlas: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// Failure with the category printed in `error[category]`.
struct Failure {
    category: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            category: e.category(),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        category: "usage",
        message: message.into(),
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("POIROT_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error[usage]: POIROT_THREADS must be a positive integer, got '{n}'");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.category, f.message.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Outcome<()> {
    match command {
        Command::Convert { input, format, common } => cmd_convert(&input, format.as_deref(), &common),
        Command::Respond { input, center, common } => cmd_respond(&input, center, &common),
        Command::Train { data, common } => cmd_train(&data, &common),
        Command::Eval {
            checkpoint,
            data,
            rotate,
            common,
        } => cmd_eval(&checkpoint, &data, rotate, &common),
        Command::Detect { scene, atlas, common } => cmd_detect(&scene, &atlas, &common),
    }
}

/// Writes through a temporary sibling and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Outcome<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().ok_or_else(|| usage(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_cloud(path: &Path) -> Outcome<PointCloud> {
    let format = Format::from_path(path).ok_or_else(|| usage(format!("unknown point-cloud format: {}", path.display())))?;
    Ok(parse(&fs::read_to_string(path)?, format)?)
}

/// `(line, key, value)` entries of the config file, if any.
fn config_entries(common: &Common) -> Outcome<Vec<(usize, String, String)>> {
    match &common.config {
        Some(path) => Ok(parse_key_values(&fs::read_to_string(path)?)?),
        None => Ok(vec![]),
    }
}

fn reject(line: usize, key: &str, command: &str) -> Failure {
    Error::Parse {
        line,
        message: format!("unknown key '{key}' for {command}"),
    }
    .into()
}

fn cmd_convert(input: &Path, format: Option<&str>, common: &Common) -> Outcome<()> {
    let mut seed = 0;
    let mut points = None;
    for (line, k, v) in config_entries(common)? {
        let bad = || Failure::from(Error::Parse { line, message: format!("invalid value '{v}' for '{k}'") });
        match k.as_str() {
            "seed" => seed = v.parse().map_err(|_| bad())?,
            "points" => points = Some(v.parse().map_err(|_| bad())?),
            _ => return Err(reject(line, &k, "convert")),
        }
    }
    let seed = common.seed.unwrap_or(seed);
    let points = common.points.or(points);
    let format = match format {
        Some(f) => f.to_ascii_lowercase(),
        None => input
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .ok_or_else(|| usage("cannot guess the input format; pass --format"))?,
    };
    let text = fs::read_to_string(input)?;
    let cloud = match format.as_str() {
        "image" | "mnist" | "grid" => convert::convert_image(&text, points.unwrap_or(256), seed)?,
        "off" | "ply" | "xyz" => {
            let fmt = match format.as_str() {
                "off" => Format::Off,
                "ply" => Format::Ply,
                _ => Format::Xyz,
            };
            let cloud = parse(&text, fmt)?;
            let cloud = points.map_or(cloud.clone(), |n| convert::subsample(&cloud, n, seed));
            convert::normalize(&cloud)?
        }
        other => return Err(usage(format!("unsupported format '{other}'"))),
    };
    info!("resolved config: format = {format}, points = {}, seed = {seed}", cloud.len());
    write_atomic(&common.out, to_xyz(&cloud).as_bytes())
}

fn cmd_respond(input: &Path, center: usize, common: &Common) -> Outcome<()> {
    let mut cfg = ModelConfig::default();
    for (line, k, v) in config_entries(common)? {
        match k.as_str() {
            "bandwidth" | "radius" => cfg.set(&k, &v).map_err(|e| Error::Parse { line, message: e.to_string() })?,
            _ => return Err(reject(line, &k, "respond")),
        }
    }
    if let Some(b) = common.bandwidth {
        cfg.bandwidth = b;
    }
    if let Some(r) = common.radius {
        cfg.radius = r;
    }
    let cloud = read_cloud(input)?;
    let radius = cfg.radius * cloud.diameter();
    info!("resolved config:\nbandwidth = {}\nradius = {}", cfg.bandwidth, cfg.radius);
    let grid = make_grid(cfg.bandwidth)?;
    let signal = respond(&cloud, center, &ResponseConfig::new(radius), &grid)?;
    let w = 2 * cfg.bandwidth;
    write_atomic(&common.out.join("response.csv"), signal.to_csv().as_bytes())?;
    write_atomic(&common.out.join("response.bin"), &signal.to_bytes())?;
    write_atomic(&common.out.join("heatmap.bmp"), &bmp::heat_map(signal.channel(0), w, w, 8))?;
    write_atomic(
        &common.out.join("config.txt"),
        format!("bandwidth = {}\nradius = {}\n", cfg.bandwidth, cfg.radius).as_bytes(),
    )
}

/// Loads a manifest of `path [class]` lines or generates a synthetic set.
fn load_data(spec: &str, task: Task) -> Outcome<Vec<Sample>> {
    if let Some(rest) = spec.strip_prefix("synthetic:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let num = |i: usize, default: u64| -> Outcome<u64> {
            parts
                .get(i)
                .map_or(Ok(default), |s| s.parse().map_err(|_| usage(format!("bad number '{s}' in '{spec}'"))))
        };
        let (count, points, seed) = (num(1, 100)? as usize, num(2, 256)? as usize, num(3, 0)?);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        return match parts[0] {
            "cube-sphere" => Ok(cube_sphere_dataset(count, points, &mut rng)),
            "barbell" => Ok(barbell_dataset(count, points, &mut rng)),
            other => Err(usage(format!("unknown synthetic dataset '{other}'"))),
        };
    }
    let path = Path::new(spec);
    let base = path.parent().unwrap_or(Path::new("."));
    let mut samples = vec![];
    for (i, line) in fs::read_to_string(path)?.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let file = it.next().expect("non-empty line");
        let label = it
            .next()
            .map(|l| {
                l.parse::<usize>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("invalid class '{l}'"),
                })
            })
            .transpose()?;
        if task == Task::Classification && label.is_none() {
            return Err(Error::Parse {
                line: i + 1,
                message: "classification entries need a class".into(),
            }
            .into());
        }
        samples.push(Sample {
            cloud: read_cloud(&base.join(file))?,
            label,
        });
    }
    if samples.is_empty() {
        return Err(Error::Empty(format!("no samples in {}", path.display())).into());
    }
    Ok(samples)
}

fn cmd_train(data: &str, common: &Common) -> Outcome<()> {
    let mut model_cfg = ModelConfig::default();
    let mut train_cfg = TrainConfig::default();
    for (line, k, v) in config_entries(common)? {
        let res = if ModelConfig::KEYS.contains(&k.as_str()) {
            model_cfg.set(&k, &v)
        } else if TrainConfig::KEYS.contains(&k.as_str()) {
            train_cfg.set(&k, &v)
        } else {
            return Err(reject(line, &k, "train"));
        };
        res.map_err(|e| Error::Parse { line, message: e.to_string() })?;
    }
    if let Some(t) = &common.task {
        model_cfg.task = Task::parse(t)?;
    }
    if let Some(b) = common.bandwidth {
        model_cfg.bandwidth = b;
    }
    if let Some(r) = common.radius {
        model_cfg.radius = r;
    }
    if let Some(p) = common.points {
        model_cfg.samples = p;
    }
    if let Some(s) = common.seed {
        model_cfg.seed = s;
        train_cfg.seed = s;
    }
    model_cfg.validate()?;
    train_cfg.validate()?;
    let resolved = format!("{}{}", model_cfg.to_text(), train_cfg.to_text());
    info!("resolved config:\n{resolved}");
    let samples = load_data(data, model_cfg.task)?;
    let mut model = Model::new(model_cfg)?;
    let records = train(&mut model, &samples, &train_cfg, |_| {})?;
    let mut log = String::new();
    for r in &records {
        let _ = writeln!(log, "{}", r.to_json());
    }
    let step = records.last().map_or(0, |r| r.step);
    write_atomic(&common.out.join("config.txt"), resolved.as_bytes())?;
    write_atomic(&common.out.join("metrics.jsonl"), log.as_bytes())?;
    write_atomic(&common.out.join("model.ckpt"), &checkpoint::save(&model, step))
}

fn cmd_eval(ckpt: &Path, data: &str, rotate: Option<u64>, common: &Common) -> Outcome<()> {
    let mut batch_size = 16usize;
    for (line, k, v) in config_entries(common)? {
        match k.as_str() {
            "batch_size" => {
                batch_size = v.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid batch_size '{v}'"),
                })?
            }
            _ => return Err(reject(line, &k, "eval")),
        }
    }
    let (mut model, step) = checkpoint::load(&fs::read(ckpt)?)?;
    let task = model.config().task;
    let mut samples = load_data(data, task)?;
    if let Some(seed) = rotate {
        for (i, s) in samples.iter_mut().enumerate() {
            s.cloud = s.cloud.rotated(&Rotation::random(seed.wrapping_add(i as u64)));
        }
    }
    info!("resolved config:\nbatch_size = {batch_size}\ncheckpoint step = {step}");
    let value = evaluate(&mut model, &samples, batch_size.max(1))?;
    let metric = match task {
        Task::Classification => "accuracy",
        Task::Segmentation => "miou",
    };
    let record = serde_json::json!({ "metric": metric, "value": value, "samples": samples.len(), "step": step });
    println!("{record}");
    write_atomic(&common.out.join("metrics.json"), format!("{record}\n").as_bytes())
}

fn cmd_detect(scene_path: &Path, atlas_path: &Path, common: &Common) -> Outcome<()> {
    let mut cfg = DetectionConfig::default();
    for (line, k, v) in config_entries(common)? {
        if !DetectionConfig::KEYS.contains(&k.as_str()) {
            return Err(reject(line, &k, "detect"));
        }
        cfg.set(&k, &v).map_err(|e| Error::Parse { line, message: e.to_string() })?;
    }
    if let Some(b) = common.bandwidth {
        cfg.bandwidth = b;
    }
    if let Some(r) = common.radius {
        cfg.radius = r;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    info!("resolved config:\n{}", cfg.to_text());
    let scene = read_cloud(scene_path)?;
    let atlas = read_cloud(atlas_path)?;
    let result = detect(&scene, &atlas, &cfg)?;

    let mut members = String::new();
    for m in &result.members {
        let _ = writeln!(members, "{m}");
    }
    let mut probs = String::new();
    for (j, (p, s)) in result.probabilities.iter().zip(&result.scores).enumerate() {
        let _ = writeln!(probs, "{}", serde_json::json!({ "candidate": j, "score": s, "probability": p }));
    }
    let summary = serde_json::json!({
        "selected": result.selected,
        "entropy": result.entropy,
        "candidates": result.probabilities.len(),
        "accepted_steps": result.entropy_trace.len() - 1,
    });
    let mut labels = vec![0; scene.len()];
    for &m in &result.members {
        labels[m] = 1;
    }
    let mut labeled = scene.clone();
    labeled.set_labels(labels)?;
    println!("{summary}");
    write_atomic(&common.out.join("config.txt"), cfg.to_text().as_bytes())?;
    write_atomic(&common.out.join("members.txt"), members.as_bytes())?;
    write_atomic(&common.out.join("probabilities.jsonl"), probs.as_bytes())?;
    write_atomic(&common.out.join("summary.json"), format!("{summary}\n").as_bytes())?;
    write_atomic(&common.out.join("labeled.xyz"), to_xyz(&labeled).as_bytes())
}
