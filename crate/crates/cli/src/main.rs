use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use purrfect_cli::report::{analyze_dir, write_bundle, AnalyzeOptions};
use purrfect_cli::study::{simulate_study, StudyConfig, STUDY_CONFIG_FILE};
use purrfect_core::audio::{encode_wav, render_trial, StimulusTiming, DEFAULT_SAMPLE_RATE};
use purrfect_core::datastore::read_session;
use purrfect_core::haptic::{HapticSink, LineSink};
use purrfect_core::music::{apply_interval, Interval, ScaleTone, Trial, TrialPhase};
use purrfect_core::session::{Condition, SessionPlan, TRAINING_MS};
use purrfect_gateway::{GatewayConfig, SharedSimulator};
use purrfect_stats::{MarginalMode, TTestKind};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "purrfect", version, about = "Musical interval training: sessions, simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one session behind the web gateway.
    Serve(ServeArgs),
    /// Write simulated session files for a whole study.
    Simulate(SimulateArgs),
    /// Fit the models and write the report bundle.
    Analyze(AnalyzeArgs),
    /// Render one interval stimulus to a WAV file.
    RenderAudio(RenderArgs),
    /// Check that session files parse and validate.
    ValidateLog(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ConditionArg {
    AudioOnly,
    AudioHaptic,
}

impl From<ConditionArg> for Condition {
    fn from(c: ConditionArg) -> Self {
        match c {
            ConditionArg::AudioOnly => Condition::AudioOnly,
            ConditionArg::AudioHaptic => Condition::AudioHaptic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Conditional,
    Integrated,
}

#[derive(Clone, Copy, ValueEnum)]
enum TTestArg {
    Welch,
    Pooled,
    Paired,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "P01")]
    participant: String,
    #[arg(long, value_enum, default_value = "audio-haptic")]
    condition: ConditionArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Silence between the two tones.
    #[arg(long, default_value_t = 200)]
    gap_ms: u32,
    #[arg(long, default_value_t = TRAINING_MS)]
    training_ms: u64,
    /// Directory that receives `<participant>.jsonl`.
    #[arg(long)]
    study_dir: Option<PathBuf>,
    /// Static trainer UI files.
    #[arg(long)]
    assets: Option<PathBuf>,
    /// Byte channel to the actuator array (serial device or file).
    #[arg(long, conflicts_with = "no_hardware")]
    device: Option<PathBuf>,
    /// Route haptic frames to the in-process simulator.
    #[arg(long)]
    no_hardware: bool,
    /// Where to export the simulator log on shutdown.
    #[arg(long)]
    device_log: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    study_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// JSON study configuration; defaults to the built-in two-group design.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_audio: Option<usize>,
    #[arg(long)]
    n_haptic: Option<usize>,
    #[arg(long)]
    gap_ms: Option<u32>,
    #[arg(long)]
    training_ms: Option<u64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    study_dir: PathBuf,
    /// Output directory; defaults to `<study-dir>/report`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "conditional")]
    marginal_mode: ModeArg,
    #[arg(long, value_enum, default_value = "welch")]
    ttest: TTestArg,
    #[arg(long)]
    svg: bool,
    /// Print response-time exclusion counts and the realized threshold.
    #[arg(long)]
    filter_report: bool,
}

#[derive(Args)]
struct RenderArgs {
    /// MIDI number of the first tone (a C-major tone between 36 and 71).
    #[arg(long)]
    base_midi: i32,
    /// Inclusive interval degree, 1..=8.
    #[arg(long)]
    degree: u8,
    #[arg(long, default_value_t = 200)]
    gap_ms: u32,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE)]
    sample_rate: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let filter = EnvFilter::try_from_env("PURRFECT_LOG_LEVEL").unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve(a) => serve(a),
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::RenderAudio(a) => render_audio(a),
        Command::ValidateLog(a) => validate_log(a),
    }
}

fn serve(a: ServeArgs) -> Result<()> {
    let timing = StimulusTiming { gap_ms: a.gap_ms, ..StimulusTiming::default() };
    let mut plan = SessionPlan::with_training_ms(&a.participant, a.condition.into(), a.seed, a.training_ms);
    plan.timing = timing;
    plan.validate()?;
    let mut config = GatewayConfig::new(plan);
    config.assets_dir = a.assets;
    if let Some(dir) = &a.study_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        config.record_path = Some(dir.join(format!("{}.jsonl", a.participant)));
    }

    let simulator = SharedSimulator::default();
    let sink: Box<dyn HapticSink> = match &a.device {
        Some(path) => {
            let f = std::fs::OpenOptions::new()
                .write(true)
                .create(true)
                .truncate(false)
                .open(path)
                .with_context(|| format!("opening device {}", path.display()))?;
            Box::new(LineSink(f))
        }
        None => {
            if !a.no_hardware {
                tracing::info!("no --device given, haptic frames go to the simulator");
            }
            Box::new(simulator.clone())
        }
    };

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let addr = SocketAddr::new(a.host, a.port);
        let listener = purrfect_gateway::bind(addr).await?;
        let gateway = purrfect_gateway::start(config, sink)?;
        tracing::info!(%addr, "serving session");
        tokio::select! {
            r = purrfect_gateway::serve(listener, gateway.router) => r?,
            _ = tokio::signal::ctrl_c() => tracing::info!("shutting down"),
        }
        anyhow::Ok(())
    })?;

    if let (None, Some(path)) = (&a.device, &a.device_log) {
        std::fs::write(path, simulator.log().to_json_lines())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => StudyConfig::standard(a.seed),
    };
    if a.config.is_some() {
        config.seed = a.seed;
    }
    if let Some(n) = a.n_audio {
        config.audio.participants = n;
    }
    if let Some(n) = a.n_haptic {
        config.haptic.participants = n;
    }
    if let Some(g) = a.gap_ms {
        config.timing.gap_ms = g;
    }
    if let Some(t) = a.training_ms {
        config.training_ms = t;
    }
    let files = simulate_study(&config, &a.study_dir)?;
    println!("wrote {} session files and {} to {}", files.len(), STUDY_CONFIG_FILE, a.study_dir.display());
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let opts = AnalyzeOptions {
        marginal_mode: match a.marginal_mode {
            ModeArg::Conditional => MarginalMode::Conditional,
            ModeArg::Integrated => MarginalMode::Integrated,
        },
        ttest: match a.ttest {
            TTestArg::Welch => TTestKind::Welch,
            TTestArg::Pooled => TTestKind::Pooled,
            TTestArg::Paired => TTestKind::Paired,
        },
        svg: a.svg,
    };
    let (bundle, table) = analyze_dir(&a.study_dir, opts)?;
    let out = a.out.unwrap_or_else(|| a.study_dir.join("report"));
    let written = write_bundle(&bundle, &table, &out, opts.svg)?;
    println!("wrote {} files to {}", written.len(), out.display());

    let sections = [
        ("spatial", bundle.spatial.absent_reason.as_deref()),
        ("accuracy", bundle.accuracy.absent_reason.as_deref()),
        ("response_time", bundle.response_time.absent_reason.as_deref()),
        ("pre_post", bundle.pre_post.absent_reason.as_deref()),
        ("guess_distributions", bundle.guess_distributions.absent_reason.as_deref()),
        ("questionnaire", bundle.questionnaire.absent_reason.as_deref()),
    ];
    for (name, reason) in sections {
        match reason {
            None => println!("  {name}: present"),
            Some(r) => println!("  {name}: absent ({r})"),
        }
    }
    if let Some(m) = &bundle.accuracy.data {
        let c = m.marginal.contrast;
        println!(
            "  accuracy contrast (haptic - audio): {:.3} [{:.3}, {:.3}]",
            c.estimate, c.ci_lower, c.ci_upper
        );
    }
    if let Some(rt) = &bundle.response_time.data {
        let c = rt.model.marginal.contrast;
        println!(
            "  response time contrast (haptic - audio): {:.3} s [{:.3}, {:.3}]",
            c.estimate, c.ci_lower, c.ci_upper
        );
        if a.filter_report {
            let f = &rt.filter;
            println!("response-time filter:");
            println!("  input rows: {}", f.n_input);
            println!("  below {:.1} s floor: {}", f.floor_s, f.n_below_floor);
            match f.threshold_s {
                Some(t) => println!("  above mean + 2 sd ({t:.2} s): {}", f.n_above_threshold),
                None => println!("  no upper threshold (fewer than two rows)"),
            }
            println!("  kept: {}", f.n_kept);
        }
    } else if a.filter_report {
        println!("response-time filter: not available");
    }
    Ok(())
}

fn render_audio(a: RenderArgs) -> Result<()> {
    let base = ScaleTone::from_midi(a.base_midi)?;
    let interval = Interval::new(a.degree)?;
    let second = apply_interval(base, interval)?;
    let trial = Trial { trial_index: 0, base, interval, second, phase: TrialPhase::Training };
    let timing = StimulusTiming { gap_ms: a.gap_ms, ..StimulusTiming::default() };
    let pcm = render_trial(&trial, timing, a.sample_rate)?;
    std::fs::write(&a.out, encode_wav(&pcm)).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "{} -> {} ({} samples, {:.0} ms) written to {}",
        base,
        second,
        pcm.samples.len(),
        pcm.duration_ms(),
        a.out.display()
    );
    Ok(())
}

fn validate_log(a: ValidateArgs) -> Result<()> {
    let mut failed = 0;
    for path in &a.files {
        match read_session(path) {
            Ok(s) => println!(
                "{}: ok ({} {:?}, {} records, {})",
                path.display(),
                s.header.participant_id,
                s.header.condition,
                s.records.len(),
                if s.end.is_some() { "complete" } else { "incomplete" }
            ),
            Err(e) => {
                failed += 1;
                println!("{}: {e}", path.display());
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} files failed validation", a.files.len());
    }
    Ok(())
}
