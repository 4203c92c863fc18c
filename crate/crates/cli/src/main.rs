use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use touch3d::config::KvMap;
use touch3d::eval::{evaluate, summarize_campaign, TrialResult};
use touch3d::filter::FilterConfig;
use touch3d::gestures::{detect, events_to_jsonl, GestureConfig, GestureProfiles};
use touch3d::interaction::MountMode;
use touch3d::pipeline::{replay, ReplayConfig, ReplayOutput};
use touch3d::sim::{
    campaign_specs, parse_size, poses, script_gesture_trace, simulate_trial, single_trial_spec, CampaignManifest,
    GestureScript, NoisePreset, Shape, SynthConfig, TrialSpec,
};
use touch3d::texture::Texture;
use touch3d::traj::{read_csv, write_csv};
use touch3d::wire::{decode_trace, encode_trace, DecodeDiagnostics, SensorFrame};

const SENSOR_FILE: &str = "sensor.3dt";
const TRUTH_FILE: &str = "truth.csv";
const MANIFEST_FILE: &str = "manifest.json";
const POINTER_FILE: &str = "pointer.csv";
const GESTURES_FILE: &str = "gestures.jsonl";
const ROTATIONS_FILE: &str = "rotations.jsonl";
const METRICS_FILE: &str = "metrics.json";
const SUMMARY_FILE: &str = "summary.json";

/// Finger-worn 3D touch pipeline: simulate traces, replay them, evaluate
/// accuracy and detect touch gestures.
#[derive(Debug, Parser)]
#[command(name = "touch3d", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic trial (or a whole campaign) as sensor.3dt + truth.csv.
    Simulate(SimulateArgs),
    /// Decode a .3dt trace and run it through filter, gestures and pointer.
    Replay(ReplayArgs),
    /// Compare a pointer trajectory against ground truth.
    Eval(EvalArgs),
    /// Replay and evaluate every trial of a simulated campaign directory.
    Campaign(CampaignArgs),
    /// Scripted gesture fixtures and standalone gesture detection.
    #[command(subcommand)]
    Gesture(GestureCommand),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Simulate the full texture x size x shape x repetition grid.
    #[arg(long, conflicts_with_all = ["texture", "size", "shape", "rep"])]
    campaign: bool,
    #[arg(long, required_unless_present = "campaign")]
    texture: Option<Texture>,
    /// Target size in mm: 12, 21, 42 or 84.
    #[arg(long, value_parser = parse_size, required_unless_present = "campaign")]
    size: Option<u32>,
    #[arg(long, required_unless_present = "campaign")]
    shape: Option<Shape>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=5))]
    rep: Option<u32>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "default")]
    noise: NoisePreset,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for --campaign (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long, default_value = "fingerpad")]
    mount: MountMode,
    /// Flat key=value filter configuration.
    #[arg(long)]
    filter_config: Option<PathBuf>,
    /// Flat key=value gesture thresholds; `texture.key=value` lines override per texture.
    #[arg(long)]
    gesture_config: Option<PathBuf>,
    /// Override as section.key=value (sections: filter, gesture, scale, rotation); repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Texture whose gesture profile applies.
    #[arg(long)]
    texture: Option<Texture>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Where to write metrics.json; defaults to stdout only.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CampaignArgs {
    /// Directory written by `simulate --campaign`.
    #[arg(long)]
    dir: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Subcommand)]
enum GestureCommand {
    /// Write the fixture trace for one gesture.
    Script {
        #[arg(long)]
        kind: GestureScript,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        texture: Option<Texture>,
        #[arg(long)]
        gesture_config: Option<PathBuf>,
    },
    /// Detect gestures in a .3dt trace and print JSON lines.
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        texture: Option<Texture>,
        #[arg(long)]
        gesture_config: Option<PathBuf>,
    },
}

/// Error carrying the process exit code: 1 for bad data, 2 for bad usage.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: 1,
            error: e.into(),
        }
    }
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_bytes(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn manifest_json(m: &CampaignManifest) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("plain data serializes");
    s.push('\n');
    s
}

fn thread_pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| usage(anyhow!("--jobs: {e}")))
}

/// Config files and `--set` entries, loaded once and specialised per texture.
struct PipelineSettings {
    base: ReplayConfig,
    profiles: GestureProfiles,
    overrides: KvMap,
}

impl PipelineSettings {
    fn load(args: &PipelineArgs) -> CliResult<Self> {
        let mut base = ReplayConfig {
            mount: args.mount,
            ..ReplayConfig::default()
        };
        if let Some(p) = &args.filter_config {
            base.filter = FilterConfig::from_kv_text(&read_text(p).map_err(usage)?)
                .map_err(|e| usage(anyhow!("--filter-config {}: {e}", p.display())))?;
        }
        let profiles = match &args.gesture_config {
            Some(p) => GestureProfiles::from_kv_text(&read_text(p).map_err(usage)?)
                .map_err(|e| usage(anyhow!("--gesture-config {}: {e}", p.display())))?,
            None => GestureProfiles::default(),
        };
        let mut overrides = KvMap::default();
        for o in &args.overrides {
            overrides
                .push_override(o)
                .map_err(|e| usage(anyhow!("--set {o}: {e}")))?;
        }
        let settings = Self {
            base,
            profiles,
            overrides,
        };
        settings.for_texture(None)?;
        Ok(settings)
    }

    fn for_texture(&self, texture: Option<Texture>) -> CliResult<ReplayConfig> {
        let mut cfg = self.base.clone();
        cfg.gestures = match texture {
            Some(t) => self.profiles.for_texture(t.name()),
            None => self.profiles.default,
        };
        cfg.apply_sections(&self.overrides, texture.map(Texture::name))
            .map_err(|e| usage(anyhow!("--set: {e}")))?;
        Ok(cfg)
    }
}

fn gesture_config(path: Option<&PathBuf>, texture: Option<Texture>) -> CliResult<GestureConfig> {
    let Some(p) = path else {
        return Ok(GestureConfig::default());
    };
    let profiles = GestureProfiles::from_kv_text(&read_text(p).map_err(usage)?)
        .map_err(|e| usage(anyhow!("--gesture-config {}: {e}", p.display())))?;
    Ok(texture.map_or(profiles.default, |t| profiles.for_texture(t.name())))
}

fn write_trial(dir: &Path, spec: &TrialSpec, synth: &SynthConfig) -> anyhow::Result<()> {
    let trial = simulate_trial(spec, synth).with_context(|| format!("trial {}", spec.name()))?;
    write_file(&dir.join(SENSOR_FILE), encode_trace(&trial.frames)?)?;
    write_file(&dir.join(TRUTH_FILE), write_csv(&poses(&trial.truth)))?;
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let synth = SynthConfig::with_noise(a.noise.model());
    if a.campaign {
        let specs = campaign_specs(a.seed);
        thread_pool(a.jobs)?.install(|| {
            specs
                .par_iter()
                .try_for_each(|s| write_trial(&a.out.join(s.name()), s, &synth))
        })?;
        let manifest = CampaignManifest {
            seed: a.seed,
            noise: a.noise,
            trials: specs,
        };
        write_file(&a.out.join(MANIFEST_FILE), manifest_json(&manifest))?;
        println!("wrote {} trials to {}", manifest.trials.len(), a.out.display());
        return Ok(());
    }
    let (texture, size, shape) = match (a.texture, a.size, a.shape) {
        (Some(t), Some(s), Some(sh)) => (t, s, sh),
        _ => return Err(usage(anyhow!("--texture, --size and --shape are required without --campaign"))),
    };
    let spec = single_trial_spec(texture, size, shape, a.rep.unwrap_or(1), a.seed).map_err(usage)?;
    write_trial(&a.out, &spec, &synth)?;
    let manifest = CampaignManifest {
        seed: a.seed,
        noise: a.noise,
        trials: vec![spec],
    };
    write_file(&a.out.join(MANIFEST_FILE), manifest_json(&manifest))?;
    println!("wrote {} to {}", spec.name(), a.out.display());
    Ok(())
}

/// Decodes a trace file. Any decoder complaint is a data error; the
/// diagnostics go to stderr either way.
fn load_frames(path: &Path) -> CliResult<(Vec<SensorFrame>, DecodeDiagnostics)> {
    let (frames, diag) = decode_trace(&read_bytes(path)?);
    eprintln!("decoder: {}", diag.to_json());
    if frames.is_empty() {
        return Err(anyhow!("{}: no decodable frames", path.display()).into());
    }
    Ok((frames, diag))
}

fn write_replay(dir: &Path, out: &ReplayOutput) -> anyhow::Result<()> {
    write_file(&dir.join(POINTER_FILE), write_csv(&out.pointer))?;
    write_file(&dir.join(GESTURES_FILE), events_to_jsonl(&out.events))?;
    let rotations: String = out
        .rotations
        .iter()
        .map(|r| serde_json::to_string(r).expect("plain data serializes") + "\n")
        .collect();
    write_file(&dir.join(ROTATIONS_FILE), rotations)?;
    Ok(())
}

fn cmd_replay(a: ReplayArgs) -> CliResult<()> {
    let settings = PipelineSettings::load(&a.pipeline)?;
    let cfg = settings.for_texture(a.texture)?;
    let (frames, diag) = load_frames(&a.input)?;
    let out = replay(&frames, &cfg)?;
    write_replay(&a.out, &out)?;
    println!(
        "{} frames, {} gesture events, {} rotations",
        out.pointer.len(),
        out.events.len(),
        out.rotations.len()
    );
    if !diag.is_clean() {
        return Err(anyhow!(
            "{}: corrupt input ({} crc failures, {} resyncs, {} bytes skipped)",
            a.input.display(),
            diag.crc_failures,
            diag.resyncs,
            diag.bytes_skipped
        )
        .into());
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let pred = read_csv(&read_text(&a.pred)?).with_context(|| a.pred.display().to_string())?;
    let truth = read_csv(&read_text(&a.truth)?).with_context(|| a.truth.display().to_string())?;
    let m = evaluate(&pred, &truth)?;
    if let Some(out) = &a.out {
        write_file(out, m.to_json() + "\n")?;
    }
    println!(
        "mean position error {:.4} mm (sigma {:.4}), mean orientation error {:.4} deg (sigma {:.4}), n {}",
        m.mean_pos_err_mm, m.pos_sigma, m.mean_ori_err_deg, m.ori_sigma, m.n
    );
    Ok(())
}

fn campaign_trial(dir: &Path, spec: &TrialSpec, settings: &PipelineSettings) -> CliResult<TrialResult> {
    let name = spec.name();
    let tdir = dir.join(&name);
    let data = |e: anyhow::Error| Failure::from(e.context(format!("trial {name}")));
    let cfg = settings.for_texture(Some(spec.texture))?;
    let (frames, diag) = decode_trace(&read_bytes(&tdir.join(SENSOR_FILE)).map_err(data)?);
    if frames.is_empty() || !diag.is_clean() {
        return Err(data(anyhow!("corrupt {SENSOR_FILE}: {}", diag.to_json())));
    }
    let truth = read_csv(&read_text(&tdir.join(TRUTH_FILE)).map_err(data)?).map_err(|e| data(e.into()))?;
    let out = replay(&frames, &cfg).map_err(|e| data(e.into()))?;
    let metrics = evaluate(&out.pointer, &truth).map_err(|e| data(e.into()))?;
    write_replay(&tdir, &out).map_err(data)?;
    write_file(&tdir.join(METRICS_FILE), metrics.to_json() + "\n").map_err(data)?;
    Ok(TrialResult { spec: *spec, metrics })
}

fn cmd_campaign(a: CampaignArgs) -> CliResult<()> {
    let settings = PipelineSettings::load(&a.pipeline)?;
    let manifest_path = a.dir.join(MANIFEST_FILE);
    let manifest: CampaignManifest = serde_json::from_str(&read_text(&manifest_path)?)
        .with_context(|| manifest_path.display().to_string())?;
    let results: Vec<TrialResult> = thread_pool(a.jobs)?.install(|| {
        manifest
            .trials
            .par_iter()
            .map(|s| campaign_trial(&a.dir, s, &settings))
            .collect::<CliResult<_>>()
    })?;
    let summary = summarize_campaign(&results)?;
    write_file(&a.dir.join(SUMMARY_FILE), summary.to_json() + "\n")?;
    let g = summary.grand;
    println!(
        "{} trials: mean position error {:.4} mm, mean orientation error {:.4} deg; texture ANOVA F {:.4} df {:?} p {:.4}",
        summary.trials, g.mean_pos_err_mm, g.mean_ori_err_deg, summary.anova.f, summary.anova.df, summary.anova.p
    );
    Ok(())
}

fn cmd_gesture(c: GestureCommand) -> CliResult<()> {
    match c {
        GestureCommand::Script {
            kind,
            out,
            texture,
            gesture_config: path,
        } => {
            let cfg = gesture_config(path.as_ref(), texture)?;
            let frames = script_gesture_trace(kind, &cfg);
            write_file(&out, encode_trace(&frames)?)?;
            println!("wrote {} frames ({kind}) to {}", frames.len(), out.display());
        }
        GestureCommand::Detect {
            input,
            out,
            texture,
            gesture_config: path,
        } => {
            let cfg = gesture_config(path.as_ref(), texture)?;
            let (frames, diag) = load_frames(&input)?;
            let text = events_to_jsonl(&detect(&frames, cfg)?);
            match &out {
                Some(p) => write_file(p, &text)?,
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
            if !diag.is_clean() {
                return Err(anyhow!("{}: corrupt input", input.display()).into());
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Campaign(a) => cmd_campaign(a),
        Command::Gesture(c) => cmd_gesture(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
