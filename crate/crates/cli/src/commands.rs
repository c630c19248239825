use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use riskcurve::{
    analyze, fit_censoring_km, fmt_sig, ipcw_rows, read_dataset_csv, run_sim_study, true_curve, Metric, Setting,
    StudyConfig, StudySpec, TruthOptions,
};
use serde_json::json;

use crate::manifest::{self, InputRecord, Manifest, MANIFEST_FILE};
use crate::{Cli, Command, EstimateArgs, ModelArgs, ReplayArgs, SimulateArgs, TrueCurveArgs};

/// A failed command: process exit code plus the message printed to stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Failure {
        Failure { code: 2, message: message.into() }
    }

    fn estimation(message: impl Into<String>) -> Failure {
        Failure { code: 3, message: message.into() }
    }
}

fn core_err(context: &'static str) -> impl Fn(riskcurve::Error) -> Failure {
    move |e| {
        let message = format!("{context}: {e}");
        if e.is_input_error() {
            Failure::input(message)
        } else {
            Failure::estimation(message)
        }
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let threads = match &cli.command {
        Command::Estimate(a) => a.run.threads,
        Command::Simulate(a) => a.run.threads,
        Command::TrueCurve(a) => a.run.threads,
        Command::Replay(a) => a.threads,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::input(format!("cannot start {threads} threads: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::TrueCurve(a) => true_curve_cmd(a),
        Command::Replay(a) => replay(a),
    })
}

fn parse_setting(s: &str) -> Result<Setting, Failure> {
    s.parse().map_err(|_| Failure::input(format!("UnknownSetting: setting must be 1 or 2, got {s:?}")))
}

/// Defaults, then the `--config` file, then explicit flags.
fn resolve_config(args: &ModelArgs) -> Result<StudyConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::input(format!("cannot read config {}: {e}", path.display())))?;
            toml::from_str::<StudyConfig>(&text)
                .map_err(|e| Failure::input(format!("invalid config {}: {e}", path.display())))?
        }
        None => StudyConfig::default(),
    };
    if let Some(v) = args.tau {
        cfg.tau = v;
    }
    if let Some(v) = args.parameterization() {
        cfg.parameterization = v;
    }
    if let Some(v) = args.knots {
        cfg.knots_q = v as usize;
    }
    if let Some(v) = args.nu0 {
        cfg.grid_lo = v;
    }
    if let Some(v) = args.nu1 {
        cfg.grid_hi = v;
    }
    if let Some(v) = args.grid_step {
        cfg.grid_step = v;
    }
    if let Some(v) = args.cv_repeats {
        cfg.cv_repeats = v;
    }
    if let Some(v) = args.e {
        cfg.perturb_e = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate().map_err(core_err("configuration"))?;
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(Failure::input(format!("--level must be in (0, 1), got {}", args.level)));
    }
    Ok(cfg)
}

/// Flags that reproduce `cfg` and `level` without a config file.
fn model_argv(cfg: &StudyConfig, level: f64) -> Vec<String> {
    [
        ("--tau", cfg.tau.to_string()),
        ("--param", cfg.parameterization.to_string()),
        ("--knots", cfg.knots_q.to_string()),
        ("--nu0", cfg.grid_lo.to_string()),
        ("--nu1", cfg.grid_hi.to_string()),
        ("--grid-step", cfg.grid_step.to_string()),
        ("--cv-repeats", cfg.cv_repeats.to_string()),
        ("--E", cfg.perturb_e.to_string()),
        ("--level", level.to_string()),
        ("--seed", cfg.seed.to_string()),
    ]
    .into_iter()
    .flat_map(|(k, v)| [k.to_string(), v])
    .collect()
}

fn join_points(points: &[f64]) -> String {
    points.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// Output directory that tracks the checksum of every file written to it.
struct Outputs {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Outputs, Failure> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::input(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Outputs { dir: dir.to_path_buf(), files: BTreeMap::new() })
    }

    /// Writes a CSV whose first line names the manifest of this run.
    fn write_csv(&mut self, name: &str, body: &str) -> Result<(), Failure> {
        let text = format!("# manifest: {MANIFEST_FILE}\n{body}");
        let path = self.dir.join(name);
        std::fs::write(&path, &text).map_err(|e| Failure::estimation(format!("cannot write {}: {e}", path.display())))?;
        self.files.insert(name.to_string(), manifest::sha256_hex(text.as_bytes()));
        Ok(())
    }
}

struct RunRecord {
    command: &'static str,
    argv: Vec<String>,
    config: serde_json::Value,
    input: Option<InputRecord>,
    seed: u64,
    warnings: Vec<String>,
}

struct Clock {
    start: Instant,
    unix: u64,
}

impl Clock {
    fn start() -> Clock {
        let unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Clock { start: Instant::now(), unix }
    }
}

fn finish(outputs: Outputs, record: RunRecord, clock: Clock) -> Result<(), Failure> {
    for w in &record.warnings {
        eprintln!("warning: {w}");
    }
    let m = Manifest {
        tool: "riskcurve".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: record.command.into(),
        argv: record.argv,
        config: record.config,
        input: record.input,
        seed: record.seed,
        threads: rayon::current_num_threads(),
        started_unix: clock.unix,
        wall_clock_seconds: clock.start.elapsed().as_secs_f64(),
        warnings: record.warnings,
        outputs: outputs.files,
    };
    manifest::write(&outputs.dir, &m)
        .map_err(|e| Failure::estimation(format!("cannot write {}: {e}", outputs.dir.join(MANIFEST_FILE).display())))
}

fn opt_at(values: &Option<Vec<f64>>, i: usize) -> String {
    values.as_ref().map_or_else(|| "NA".to_string(), |v| fmt_sig(v[i]))
}

fn estimate(a: &EstimateArgs) -> Result<(), Failure> {
    let clock = Clock::start();
    let cfg = resolve_config(&a.model)?;
    let level = a.model.level;
    let bytes =
        std::fs::read(&a.data).map_err(|e| Failure::input(format!("cannot read {}: {e}", a.data.display())))?;
    let data = read_dataset_csv(bytes.as_slice(), None).map_err(core_err("reading data"))?.dataset;

    let ghat = fit_censoring_km(&data, &vec![1.0; data.len()]).map_err(core_err("censoring weights"))?;
    ipcw_rows(&data, &ghat, cfg.tau).map_err(core_err("censoring weights"))?;
    let analysis = analyze(&data, &cfg, level, None).map_err(core_err("estimation"))?;

    let mut outputs = Outputs::create(&a.run.out_dir)?;
    let c = &analysis.curve;
    let mut body = String::from("v,r_hat,se,ci_lo,ci_hi\n");
    for i in 0..c.v_grid.len() {
        let _ = writeln!(
            body,
            "{},{},{},{},{}",
            fmt_sig(c.v_grid[i]),
            fmt_sig(c.r_hat[i]),
            opt_at(&c.se, i),
            opt_at(&c.ci_lo, i),
            opt_at(&c.ci_hi, i)
        );
    }
    outputs.write_csv("curve.csv", &body)?;

    let inv = &analysis.inverse;
    let mut body = String::from("p,proportion,se,ci_lo,ci_hi\n");
    for i in 0..inv.p_grid.len() {
        let _ = writeln!(
            body,
            "{},{},{},{},{}",
            fmt_sig(inv.p_grid[i]),
            fmt_sig(inv.proportion[i]),
            opt_at(&inv.se, i),
            opt_at(&inv.ci_lo, i),
            opt_at(&inv.ci_hi, i)
        );
    }
    outputs.write_csv("inverse.csv", &body)?;

    let path = std::fs::canonicalize(&a.data).unwrap_or_else(|_| a.data.clone());
    let path = path.display().to_string();
    let mut argv = vec!["estimate".to_string(), "--data".into(), path.clone()];
    argv.extend(model_argv(&cfg, level));
    let mut warnings = analysis.warnings.clone();
    if analysis.replicates_used < cfg.perturb_e {
        let used = format!("{} of {} perturbation replicates used", analysis.replicates_used, cfg.perturb_e);
        warnings.insert(0, used);
    }
    let record = RunRecord {
        command: "estimate",
        argv,
        config: json!({ "study": cfg, "level": level }),
        input: Some(InputRecord { path, sha256: manifest::sha256_hex(&bytes) }),
        seed: cfg.seed,
        warnings,
    };
    finish(outputs, record, clock)
}

fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let clock = Clock::start();
    let setting = parse_setting(&a.setting)?;
    let cfg = resolve_config(&a.model)?;
    if a.n == 0 || a.replicates == 0 {
        return Err(Failure::input("--n and --replicates must be positive"));
    }
    let metric: Metric = a.metric.parse().map_err(core_err("--metric"))?;
    let mut spec = StudySpec::new(setting, a.n, a.replicates, cfg.clone());
    spec.level = a.model.level;
    if let Some(points) = &a.points {
        if points.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Failure::input("--points must lie in (0, 1)"));
        }
        match metric {
            Metric::Curve => spec.v_points = points.clone(),
            Metric::Inverse => spec.p_points = points.clone(),
        }
    }
    if let Some(m) = a.mc_size {
        spec.truth.mc_size = m;
    }
    if let Some(r) = a.rounds {
        spec.truth.rounds = r;
    }
    let points = match metric {
        Metric::Curve => spec.v_points.clone(),
        Metric::Inverse => spec.p_points.clone(),
    };

    let report = run_sim_study(&spec, cfg.seed).map_err(core_err("simulation"))?;
    let mut buf = Vec::new();
    report.write_csv(metric, &mut buf).map_err(core_err("writing report"))?;
    let mut outputs = Outputs::create(&a.run.out_dir)?;
    outputs.write_csv("study.csv", &String::from_utf8(buf).expect("csv output is utf-8"))?;

    let mut argv: Vec<String> = vec![
        "simulate".into(),
        "--setting".into(),
        setting.to_string(),
        "--n".into(),
        a.n.to_string(),
        "--replicates".into(),
        a.replicates.to_string(),
        "--metric".into(),
        a.metric.clone(),
        "--points".into(),
        join_points(&points),
        "--mc-size".into(),
        spec.truth.mc_size.to_string(),
        "--rounds".into(),
        spec.truth.rounds.to_string(),
    ];
    argv.extend(model_argv(&cfg, spec.level));
    let mut warnings = Vec::new();
    if report.failed > 0 {
        warnings.push(format!("{} of {} simulation replicates failed", report.failed, report.replicates));
    }
    let record = RunRecord {
        command: "simulate",
        argv,
        config: json!({
            "study": cfg,
            "level": spec.level,
            "setting": setting.to_string(),
            "n": a.n,
            "replicates": a.replicates,
            "metric": a.metric,
            "points": points,
            "mc_size": spec.truth.mc_size,
            "rounds": spec.truth.rounds,
        }),
        input: None,
        seed: cfg.seed,
        warnings,
    };
    finish(outputs, record, clock)
}

fn true_curve_cmd(a: &TrueCurveArgs) -> Result<(), Failure> {
    let clock = Clock::start();
    let setting = parse_setting(&a.setting)?;
    let grid_cfg = StudyConfig {
        tau: a.tau,
        grid_lo: a.nu0,
        grid_hi: a.nu1,
        grid_step: a.grid_step,
        ..StudyConfig::default()
    };
    grid_cfg.validate().map_err(core_err("configuration"))?;
    let defaults = TruthOptions::default();
    let opts = TruthOptions {
        tau: a.tau,
        mc_size: a.mc_size.unwrap_or(defaults.mc_size),
        rounds: a.rounds.unwrap_or(defaults.rounds),
        seed: a.seed.unwrap_or(defaults.seed),
        half_width: a.grid_step / 2.0,
    };
    if opts.mc_size == 0 || opts.rounds == 0 {
        return Err(Failure::input("--mc-size and --rounds must be positive"));
    }
    let truth = true_curve(setting, &grid_cfg.grid(), &opts).map_err(core_err("true curve"))?;

    let mut outputs = Outputs::create(&a.run.out_dir)?;
    let mut body = String::from("v,r_true\n");
    for (v, r) in truth.v_grid.iter().zip(&truth.r_true) {
        let _ = writeln!(body, "{},{}", fmt_sig(*v), fmt_sig(*r));
    }
    outputs.write_csv("true_curve.csv", &body)?;

    let argv = [
        ("--setting", setting.to_string()),
        ("--tau", a.tau.to_string()),
        ("--mc-size", opts.mc_size.to_string()),
        ("--rounds", opts.rounds.to_string()),
        ("--seed", opts.seed.to_string()),
        ("--nu0", a.nu0.to_string()),
        ("--nu1", a.nu1.to_string()),
        ("--grid-step", a.grid_step.to_string()),
    ]
    .into_iter()
    .fold(vec!["true-curve".to_string()], |mut acc, (k, v)| {
        acc.push(k.into());
        acc.push(v);
        acc
    });
    let record = RunRecord {
        command: "true-curve",
        argv,
        config: json!({
            "setting": setting.to_string(),
            "tau": a.tau,
            "mc_size": opts.mc_size,
            "rounds": opts.rounds,
            "half_width": opts.half_width,
            "nu0": a.nu0,
            "nu1": a.nu1,
            "grid_step": a.grid_step,
        }),
        input: None,
        seed: opts.seed,
        warnings: Vec::new(),
    };
    finish(outputs, record, clock)
}

fn replay(a: &ReplayArgs) -> Result<(), Failure> {
    let original = manifest::read(&a.manifest).map_err(Failure::input)?;
    if let Some(input) = &original.input {
        let bytes = std::fs::read(&input.path).map_err(|e| Failure::input(format!("cannot read {}: {e}", input.path)))?;
        if manifest::sha256_hex(&bytes) != input.sha256 {
            return Err(Failure::input(format!("{} changed since the manifest was written", input.path)));
        }
    }
    let mut argv = vec!["riskcurve".to_string()];
    argv.extend(original.argv.iter().cloned());
    argv.extend(["--out-dir".to_string(), a.out_dir.display().to_string()]);
    argv.extend(["--threads".to_string(), a.threads.to_string()]);
    let cli = Cli::try_parse_from(&argv).map_err(|e| Failure::input(format!("manifest arguments rejected: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Failure::input("a manifest cannot replay another replay"));
    }
    run(cli)?;

    let replayed = manifest::read(&a.out_dir.join(MANIFEST_FILE)).map_err(Failure::estimation)?;
    let mut identical = replayed.outputs.len() == original.outputs.len();
    for (name, sum) in &original.outputs {
        let same = replayed.outputs.get(name) == Some(sum);
        println!("{name}: {}", if same { "identical" } else { "differs" });
        identical &= same;
    }
    if identical {
        Ok(())
    } else {
        Err(Failure::estimation("replayed outputs differ from the manifest"))
    }
}
