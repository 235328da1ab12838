//! The `qmsync` command line.
//!
//! Every subcommand writes a `#`-commented manifest (tool version, seed,
//! resolved configuration, inputs) ahead of its table or record, so an output
//! file alone is enough to rerun it. Wall-clock time is only embedded on
//! request because it would break byte-for-byte reproducibility.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analytic::{Normalization, SyncModel};
use crate::error::{Error, Result};
use crate::interference::{
    fit_homi, indistinguishability, purity, scan_delays, synthetic_scan, GaussianJsi, GridSpec, HomiFit, HomiParams, HomiScan,
    JsiGrid,
};
use crate::model::{herald_prob_within, ExperimentConfig};
use crate::qkd::{
    format_tables, gain_and_qber, parse_tables, project_improvements, reference_stats, secure_key_rate, BoundMode,
    KeyRateResult, QkdStats, DEFAULT_EC_INEFFICIENCY,
};
use crate::sim::{
    generate_qkd_counts, Estimate, PolicyKind, QkdCountOptions, QubitSchedule, RngContract, SimOptions, SimStats, Simulator,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "qmsync", version, about = "Synchronized heralded single-photon sources: rates, simulation and QKD analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    /// Comma-separated table.
    Table,
    /// `key=value` lines.
    Record,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment configuration (TOML); unset keys keep their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one parameter, e.g. `--set channel.t_channel=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[arg(long, default_value_t = 1, global = true)]
    pub seed: u64,
    /// Monte Carlo frames (synchronization attempts).
    #[arg(long, default_value_t = 1_000_000, global = true)]
    pub frames: u64,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Table, global = true)]
    pub format: OutputFormat,
    /// Worker threads for the simulation (0 = all cores). Never changes results.
    #[arg(long, default_value_t = 0, global = true)]
    pub workers: usize,
    /// Record wall-clock time in the output manifest.
    #[arg(long, global = true)]
    pub timestamps: bool,
    /// Enable trigger and detector dark counts in simulations.
    #[arg(long, global = true)]
    pub dark_counts: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepMode {
    Analytic,
    Montecarlo,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReferenceColumn {
    Sync,
    Nosync,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rates and enhancement versus the maximum storage N.
    SweepN {
        #[command(flatten)]
        common: Common,
        /// N values: comma-separated numbers and `a:b` ranges.
        #[arg(long, default_value = "1:40")]
        n: String,
        #[arg(long, value_enum, default_value_t = SweepMode::Analytic)]
        mode: SweepMode,
        #[arg(long, default_value = "per-n-slots")]
        normalization: String,
    },
    /// Monte Carlo run of the configured experiment.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "latest-slot")]
        policy: PolicyArg,
        /// Write one JSON record per frame to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Simulated MDI-QKD coincidence tables.
    QkdCounts {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.92)]
        visibility: f64,
        /// Input pairs over e, l, +, -.
        #[arg(long, default_value = "ee,el,le,ll,++,+-,-+,--")]
        schedule: String,
        /// Drop coincidences from multi-photon deliveries.
        #[arg(long)]
        no_multiphoton: bool,
        #[arg(long, default_value = "per-n-slots")]
        normalization: String,
    },
    /// Secure key rate from coincidence tables or gain/QBER statistics.
    Keyrate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: QkdInput,
        /// `reported` or `poisson:<n>`.
        #[arg(long, default_value = "reported")]
        bound: String,
        #[arg(long, default_value_t = DEFAULT_EC_INEFFICIENCY)]
        fe: f64,
        #[arg(long, default_value = "per-n-slots")]
        normalization: String,
    },
    /// Fit a two-photon interference dip.
    HomiFit {
        #[command(flatten)]
        common: Common,
        /// Scan file `delay_ps,counts[,background]`.
        #[arg(long, required_unless_present = "synthetic")]
        scan: Option<PathBuf>,
        /// Constant background per point for two-column scans.
        #[arg(long, default_value_t = 0.0)]
        background: f64,
        /// Fit a Poisson scan generated from these parameters instead.
        #[arg(long)]
        synthetic: bool,
        #[arg(long, default_value_t = 0.957)]
        visibility: f64,
        #[arg(long, default_value_t = 6.0)]
        width: f64,
        #[arg(long, default_value_t = 1000.0)]
        amplitude: f64,
    },
    /// Purity and overlap of joint spectral intensities.
    Jsi {
        #[command(flatten)]
        common: Common,
        /// One or two JSI files.
        #[arg(long = "grid", num_args = 1..=2)]
        grids: Vec<PathBuf>,
        /// Resample the second grid onto the first one's axes.
        #[arg(long)]
        resample: bool,
        /// Analyze a Gaussian JSI with this correlation angle instead.
        #[arg(long, allow_negative_numbers = true)]
        gaussian_angle: Option<f64>,
    },
    /// Key rate after scaling transmission and replacing e_Z.
    Project {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: QkdInput,
        /// Transmission gain per arm; default undoes 22% encoders and a 60% BSM.
        #[arg(long, default_value_t = 1.0 / (0.22 * 0.6))]
        scale: f64,
        #[arg(long)]
        new_e_z: Option<f64>,
        #[arg(long, default_value = "reported")]
        bound: String,
        #[arg(long, default_value_t = DEFAULT_EC_INEFFICIENCY)]
        fe: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    LatestSlot,
    FirstHerald,
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct QkdInput {
    /// Coincidence-table file.
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Gain/QBER statistics file (`key = value`).
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Built-in measured statistics.
    #[arg(long, value_enum)]
    pub reference: Option<ReferenceColumn>,
}

/// Header embedded in every output.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub version: String,
    pub wall_clock_unix_s: Option<u64>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut out = format!("# qmsync {} {}\n# seed: {}\n", self.version, self.subcommand, self.seed);
        for input in &self.inputs {
            out.push_str(&format!("# input: {input}\n"));
        }
        for output in &self.outputs {
            out.push_str(&format!("# output: {output}\n"));
        }
        if let Some(t) = self.wall_clock_unix_s {
            out.push_str(&format!("# wall_clock_unix_s: {t}\n"));
        }
        out.push_str("# config:\n");
        for line in self.config.to_toml_string().lines() {
            if line.is_empty() {
                out.push_str("#\n");
            } else {
                out.push_str(&format!("#   {line}\n"));
            }
        }
        out
    }
}

/// Tabular or record-shaped command output.
#[derive(Debug, Clone, Default)]
struct Output {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Output {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn record(fields: Vec<(&str, String)>) -> Self {
        let mut out = Self::new(&fields.iter().map(|(k, _)| *k).collect::<Vec<_>>());
        out.rows.push(fields.into_iter().map(|(_, v)| v).collect());
        out
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Table => {
                let mut out = self.columns.join(",");
                out.push('\n');
                for row in &self.rows {
                    out.push_str(&row.join(","));
                    out.push('\n');
                }
                out
            }
            OutputFormat::Record => {
                let blocks: Vec<String> = self
                    .rows
                    .iter()
                    .map(|row| self.columns.iter().zip(row).map(|(k, v)| format!("{k}={v}\n")).collect())
                    .collect();
                blocks.join("\n")
            }
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), num)
}

impl Common {
    fn load_config(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                ExperimentConfig::from_toml_str(&text).map_err(|e| rename_source(e, path))?
            }
            None => ExperimentConfig::default(),
        };
        for item in &self.set {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("--set expects KEY=VALUE, got '{item}'")))?;
            config.set(key.trim(), value)?;
        }
        config.validate()?;
        Ok(config)
    }

    fn sim_options(&self, policy: PolicyKind) -> SimOptions {
        SimOptions {
            workers: self.workers,
            dark_counts: self.dark_counts,
            policy,
            ..SimOptions::default()
        }
    }

    fn manifest(&self, subcommand: &str, config: &ExperimentConfig, inputs: Vec<String>) -> RunManifest {
        let wall_clock_unix_s = if self.timestamps {
            SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
        } else {
            None
        };
        RunManifest {
            subcommand: subcommand.to_string(),
            config: *config,
            seed: self.seed,
            inputs,
            outputs: self.out.iter().map(|p| p.display().to_string()).collect(),
            version: VERSION.to_string(),
            wall_clock_unix_s,
        }
    }
}

fn rename_source(err: Error, path: &Path) -> Error {
    match err {
        Error::Parse { line, column, message, .. } => Error::Parse {
            source_name: path.display().to_string(),
            line,
            column,
            message,
        },
        other => other,
    }
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Exit status for an error: 1 I/O, 2 parse, 3 invalid parameter,
/// 4 convergence failure, 5 no data, 6 unsupported or resource limit,
/// 7 grid problems.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 1,
        Error::Parse { .. } => 2,
        Error::InvalidParameter(_) => 3,
        Error::ConvergenceFailure(_) => 4,
        Error::NoData(_) => 5,
        Error::UnsupportedConfiguration(_) | Error::ResourceLimit(_) => 6,
        Error::DegenerateGrid(_) | Error::AxisMismatch(_) => 7,
    }
}

/// Parses `1:40`, `5,10,20` or mixtures of both.
pub fn parse_n_values(spec: &str) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        let parse = |s: &str| {
            s.trim()
                .parse::<u32>()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| Error::invalid(format!("'{s}' is not a storage count >= 1")))
        };
        match part.split_once(':') {
            Some((a, b)) => {
                let (a, b) = (parse(a)?, parse(b)?);
                if a > b {
                    return Err(Error::invalid(format!("empty range {part}")));
                }
                out.extend(a..=b);
            }
            None => out.push(parse(part)?),
        }
    }
    Ok(out)
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let (common, body, manifest) = match &cli.command {
        Command::SweepN { common, n, mode, normalization } => {
            let config = common.load_config()?;
            let body = sweep_n(common, &config, &parse_n_values(n)?, *mode, normalization.parse()?)?;
            (common, body, common.manifest("sweep-n", &config, vec![format!("n={n}")]))
        }
        Command::Simulate { common, policy, trace } => {
            let config = common.load_config()?;
            let policy = match policy {
                PolicyArg::LatestSlot => PolicyKind::LatestSlot,
                PolicyArg::FirstHerald => PolicyKind::FirstHerald,
            };
            let body = simulate(common, &config, policy, trace.as_deref())?;
            (common, body, common.manifest("simulate", &config, vec![format!("frames={}", common.frames)]))
        }
        Command::QkdCounts { common, visibility, schedule, no_multiphoton, normalization } => {
            let config = common.load_config()?;
            let schedule: QubitSchedule = schedule.parse()?;
            let options = QkdCountOptions {
                visibility: *visibility,
                include_multiphoton: !no_multiphoton,
                normalization: normalization.parse()?,
            };
            let counts = generate_qkd_counts(
                &config,
                &schedule,
                options,
                common.sim_options(PolicyKind::LatestSlot),
                common.frames,
                RngContract::new(common.seed),
            )?;
            let inputs = vec![
                format!("frames={}", common.frames),
                format!("visibility={visibility}"),
                format!("schedule={schedule}"),
                format!("multiphoton={}", !no_multiphoton),
                format!("sync_successes={}", counts.sync_successes),
            ];
            // the table file format is fixed, whatever --format says
            let manifest = common.manifest("qkd-counts", &config, inputs);
            let text = format!("{}{}", manifest.render(), format_tables(&counts.z, &counts.x));
            return emit(common, &text, stdout);
        }
        Command::Keyrate { common, input, bound, fe, normalization } => {
            let config = common.load_config()?;
            let (stats, source) = load_stats(input)?;
            let normalization: Normalization = normalization.parse()?;
            let pulses = normalization.pulses_per_attempt(&config, config.timing.max_storage);
            let result = secure_key_rate(&stats, *fe, bound.parse()?)?
                .with_pulse_rate(config.timing.attempt_rate_hz() * f64::from(pulses));
            let body = key_rate_output(&result, &stats);
            (common, body, common.manifest("keyrate", &config, vec![source, format!("bound={bound}")]))
        }
        Command::HomiFit { common, scan, background, synthetic, visibility, width, amplitude } => {
            let config = common.load_config()?;
            let (scan_data, source) = if *synthetic {
                let params = HomiParams {
                    visibility: *visibility,
                    dip_width_ps: *width,
                    amplitude: *amplitude,
                    center_ps: 0.0,
                };
                let s = synthetic_scan(&params, &scan_delays(), *background, common.seed)?;
                (s, format!("synthetic V={visibility} width={width} amplitude={amplitude} background={background}"))
            } else {
                let path = scan.as_ref().expect("clap enforces --scan");
                let s = HomiScan::from_text(&read_input(path)?, &path.display().to_string(), *background)?;
                (s, path.display().to_string())
            };
            let fit = fit_homi(&scan_data)?;
            (common, homi_output(&fit), common.manifest("homi-fit", &config, vec![source]))
        }
        Command::Jsi { common, grids, resample, gaussian_angle } => {
            let config = common.load_config()?;
            let (body, inputs) = jsi(grids, *resample, *gaussian_angle)?;
            (common, body, common.manifest("jsi", &config, inputs))
        }
        Command::Project { common, input, scale, new_e_z, bound, fe } => {
            let config = common.load_config()?;
            let (stats, source) = load_stats(input)?;
            let mode: BoundMode = bound.parse()?;
            let base = secure_key_rate(&stats, *fe, mode)?;
            let projected = project_improvements(&stats, *scale, *new_e_z, *fe, mode)?;
            let body = Output::record(vec![
                ("base_rate_per_pulse", num(base.rate_per_pulse)),
                ("projected_rate_per_pulse", num(projected.rate_per_pulse)),
                ("rate_ratio", format!("{}", projected.rate_per_pulse / base.rate_per_pulse)),
                ("gain_factor", format!("{}", scale * scale)),
                ("projected_h_qber_z", format!("{}", projected.ec_leak / projected.f_e)),
                ("projected_secure_key", projected.secure().to_string()),
            ]);
            let inputs = vec![source, format!("scale={scale}"), format!("new_e_z={}", opt(*new_e_z))];
            (common, body, common.manifest("project", &config, inputs))
        }
    };
    let text = format!("{}{}", manifest.render(), body.render(common.format));
    emit(common, &text, stdout)
}

fn emit(common: &Common, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match &common.out {
        Some(path) => fs::write(path, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn sweep_n(common: &Common, config: &ExperimentConfig, ns: &[u32], mode: SweepMode, norm: Normalization) -> Result<Output> {
    let analytic = mode != SweepMode::Montecarlo;
    let mc = mode != SweepMode::Analytic;
    let mut columns = vec!["n", "pulses_per_attempt"];
    if analytic {
        columns.extend(["sync_herald_prob", "sync_prob", "coincidence_per_attempt", "enhancement"]);
    }
    if mc {
        columns.extend(["mc_sync_rate", "mc_single_pair_rate", "mc_single_pair_se", "mc_coincidence_rate"]);
    }
    if analytic && mc {
        columns.push("residual_se");
    }
    let mut out = Output::new(&columns);
    for &n in ns {
        let mut cfg = *config;
        cfg.timing.max_storage = n;
        cfg.timing.slots_per_frame = cfg.timing.slots_per_frame.max(n);
        let pulses = norm.pulses_per_attempt(&cfg, n);
        let mut row = vec![n.to_string(), pulses.to_string()];
        let mut expected = None;
        if analytic {
            let model = SyncModel::new(&cfg)?;
            let heralds = herald_prob_within(n, &cfg.source_a)? * herald_prob_within(n, &cfg.source_b)?;
            let p = model.sync_prob(2, n)?;
            expected = Some(p);
            row.extend([
                num(heralds),
                num(p),
                num(model.sync_coincidence_per_attempt(n)?),
                format!("{}", model.enhancement_factor(n, norm)?),
            ]);
        }
        if mc {
            let sim = Simulator::new(&cfg, common.sim_options(PolicyKind::LatestSlot))?;
            let stats = sim.run(common.frames, RngContract::new(common.seed))?;
            let single = stats.single_pair_rate();
            row.extend([
                num(stats.sync_rate().value),
                num(single.value),
                num(single.std_err),
                num(stats.coincidence_rate().value),
            ]);
            if let Some(p) = expected {
                row.push(residual(single, p));
            }
        }
        out.push(row);
    }
    Ok(out)
}

fn simulate(common: &Common, config: &ExperimentConfig, policy: PolicyKind, trace: Option<&Path>) -> Result<Output> {
    let sim = Simulator::new(config, common.sim_options(policy))?;
    let seed = RngContract::new(common.seed);
    let stats: SimStats = match trace {
        Some(path) => {
            let file = std::io::BufWriter::new(fs::File::create(path)?);
            sim.trace(common.frames, seed, file)?
        }
        None => sim.run(common.frames, seed)?,
    };
    let n = config.timing.max_storage;
    let analytic = SyncModel::new(config)?.sync_prob(2, n)?;
    let single = stats.single_pair_rate();
    let storage = stats.mean_storage_cycles();
    let sync = stats.sync_rate();
    let coinc = stats.coincidence_rate();
    let mut fields = vec![
        ("n_frames", stats.n_frames.to_string()),
        ("herald_counts_a", stats.herald_counts[0].to_string()),
        ("herald_counts_b", stats.herald_counts[1].to_string()),
        ("sync_successes", stats.sync_successes.to_string()),
        ("single_pair_deliveries", stats.single_pair_deliveries.to_string()),
        ("coincidence_count", stats.coincidence_count.to_string()),
        ("sync_rate", num(sync.value)),
        ("sync_rate_se", num(sync.std_err)),
        ("single_pair_rate", num(single.value)),
        ("single_pair_rate_se", num(single.std_err)),
        ("coincidence_rate", num(coinc.value)),
        ("coincidence_rate_se", num(coinc.std_err)),
        ("mean_storage_cycles", format!("{}", storage.value)),
        ("mean_storage_cycles_se", format!("{}", storage.std_err)),
        ("analytic_single_pair_prob", num(analytic)),
    ];
    fields.push(("residual_se", residual(single, analytic)));
    Ok(Output::record(fields))
}

/// Standard-error residual, `none` while the estimate has no spread yet.
fn residual(estimate: Estimate, reference: f64) -> String {
    if estimate.std_err > 0.0 {
        format!("{:.3}", estimate.z_score(reference))
    } else {
        "none".to_string()
    }
}

fn load_stats(input: &QkdInput) -> Result<(QkdStats, String)> {
    if let Some(path) = &input.counts {
        let name = path.display().to_string();
        let (z, x) = parse_tables(&read_input(path)?, &name)?;
        if z.total() + x.total() == 0 {
            return Err(Error::NoData(format!("{name} records no coincidences")));
        }
        return Ok((gain_and_qber(&z, &x)?, format!("counts={name}")));
    }
    if let Some(path) = &input.stats {
        let name = path.display().to_string();
        return Ok((QkdStats::from_text(&read_input(path)?, &name)?, format!("stats={name}")));
    }
    match input.reference {
        Some(ReferenceColumn::Sync) => Ok((reference_stats(true), "reference=sync".into())),
        Some(ReferenceColumn::Nosync) => Ok((reference_stats(false), "reference=nosync".into())),
        None => Err(Error::invalid("one of --counts, --stats or --reference is required")),
    }
}

fn key_rate_output(r: &KeyRateResult, stats: &QkdStats) -> Output {
    Output::record(vec![
        ("rate_per_pulse", num(r.rate_per_pulse)),
        ("rate_per_second", opt(r.rate_per_second)),
        ("secure_key", r.secure().to_string()),
        ("gain_z", num(stats.gain_z)),
        ("gain_x", num(stats.gain_x)),
        ("qber_z", opt(stats.qber_z)),
        ("qber_x", opt(stats.qber_x)),
        ("gain_z_lower", num(r.gain_z_lower)),
        ("qber_x_upper", format!("{}", r.qber_x_upper)),
        ("qber_z_upper", format!("{}", r.qber_z_upper)),
        ("h_qber_x", format!("{}", r.h_qber_x)),
        ("ec_leak", format!("{}", r.ec_leak)),
        ("f_e", format!("{}", r.f_e)),
        ("qber_above_half", stats.qber_above_half().to_string()),
    ])
}

fn homi_output(fit: &HomiFit) -> Output {
    let u = &fit.uncertainties;
    Output::record(vec![
        ("visibility_net", format!("{}", fit.visibility_net)),
        ("visibility_net_err", format!("{}", u.visibility)),
        ("visibility_raw", format!("{}", fit.visibility_raw)),
        ("dip_width_fwhm_ps", format!("{}", fit.dip_width_ps)),
        ("dip_width_err_ps", format!("{}", u.dip_width_ps)),
        ("sigma_ps", format!("{}", fit.sigma_ps)),
        ("center_ps", format!("{}", fit.center_ps)),
        ("amplitude", format!("{}", fit.amplitude)),
        ("background", format!("{}", fit.background)),
        ("chi_square", format!("{}", fit.chi_square)),
        ("dof", fit.dof.to_string()),
    ])
}

fn jsi(grids: &[PathBuf], resample: bool, gaussian_angle: Option<f64>) -> Result<(Output, Vec<String>)> {
    if let Some(angle) = gaussian_angle {
        let g = GaussianJsi {
            correlation_angle: angle,
            ..GaussianJsi::default()
        };
        let grid = g.grid(&GridSpec::default())?;
        let out = Output::record(vec![
            ("purity", format!("{}", purity(&grid)?)),
            ("continuum_purity", format!("{}", g.continuum_purity())),
        ]);
        return Ok((out, vec![format!("gaussian correlation_angle={angle}")]));
    }
    let loaded = grids
        .iter()
        .map(|p| JsiGrid::from_text(&read_input(p)?, &p.display().to_string()))
        .collect::<Result<Vec<_>>>()?;
    let inputs = grids.iter().map(|p| p.display().to_string()).collect();
    match loaded.as_slice() {
        [a] => Ok((Output::record(vec![("purity", format!("{}", purity(a)?))]), inputs)),
        [a, b] => {
            let b = if resample && !a.is_aligned_with(b) {
                b.resample(a.signal_axis().to_vec(), a.idler_axis().to_vec())?
            } else {
                b.clone()
            };
            let out = Output::record(vec![
                ("purity_a", format!("{}", purity(a)?)),
                ("purity_b", format!("{}", purity(&b)?)),
                ("indistinguishability", format!("{}", indistinguishability(a, &b)?)),
            ]);
            Ok((out, inputs))
        }
        _ => Err(Error::invalid("give one or two --grid files, or --gaussian-angle")),
    }
}
