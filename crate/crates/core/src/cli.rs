//! Command-line driver: merges settings, runs a command, writes CSV.
//!
//! Every setting is a flat `key = value` pair. Values come from the flag of
//! the same name, else the `--config` file, else the built-in default. Output
//! files open with `# key = value` comment lines holding the command, the
//! tool version and every merged setting, so `replay` can regenerate a file
//! from its header alone.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::analytic::{self, UplinkForm};
use crate::model::{derive_constants, SnrMode, SystemParams};
use crate::optimizer::{sweep_w, OptOptions};
use crate::simulator::{self, HarvestPolicy, Histogram, Scheme, SimConfig, SimReport};
use crate::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every setting in header order: `(key, default, help)`.
pub const SETTINGS: &[(&str, &str, &str)] = &[
    ("total_power", "0.01", "access point transmit power P_t [W]"),
    ("split_ratio", "0.5", "energy share rho used by `simulate`"),
    (
        "channel_rate",
        "3",
        "rate lambda of the exponential power gain",
    ),
    ("distance", "1.5", "link distance [m]"),
    ("pathloss_exp", "2", "path-loss exponent"),
    ("bandwidth", "1e6", "bandwidth W [Hz]"),
    (
        "noise_density",
        "4e-7",
        "noise power spectral density N_0 [W/Hz]",
    ),
    ("block_len", "1e-3", "block length T_B [s]"),
    ("packet_nats", "100", "packet size [nats]"),
    ("harvest_eff", "0.5", "energy harvesting efficiency eta"),
    (
        "weight_uplink",
        "0.5",
        "uplink weight w for `simulate` and `compare`",
    ),
    ("rho_grid", "0.5", "rho values for `analytic`"),
    ("w_grid", "0.5", "w values for `analytic` and `optimize`"),
    (
        "p_grid",
        "0.002,0.005,0.008,0.012,0.015",
        "generation probabilities for `compare`",
    ),
    ("rho_init", "0.5", "Newton starting point"),
    ("max_iters", "100", "optimizer iteration budget"),
    ("tol", "1e-12", "optimizer step tolerance"),
    (
        "boundary_eps",
        "1e-4",
        "distance from 0 and 1 treated as the boundary",
    ),
    ("num_blocks", "1000000", "blocks per replication"),
    ("seed", "1", "base random seed"),
    (
        "warmup_blocks",
        "auto",
        "discarded leading blocks (auto = num_blocks/100)",
    ),
    ("replications", "1", "independent replications"),
    ("snr_mode", "linear", "linear | exact"),
    ("scheme", "power_split", "power_split | time_split"),
    (
        "gen_prob",
        "none",
        "per-block generation probability (time_split)",
    ),
    ("harvest_policy", "paced", "paced | greedy"),
];

/// A failure with its process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
    fn io(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParam { .. } | Error::Unstable { .. } => 1,
            Error::Domain(_) | Error::NotConverged { .. } => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Analytic,
    Optimize,
    Simulate,
    Compare,
}

impl CommandKind {
    fn name(self) -> &'static str {
        match self {
            CommandKind::Analytic => "analytic",
            CommandKind::Optimize => "optimize",
            CommandKind::Simulate => "simulate",
            CommandKind::Compare => "compare",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        [
            Self::Analytic,
            Self::Optimize,
            Self::Simulate,
            Self::Compare,
        ]
        .into_iter()
        .find(|c| c.name() == s)
    }
}

/// Fully merged and validated invocation.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub command: CommandKind,
    pub params: SystemParams,
    pub rho_grid: Vec<f64>,
    pub w_grid: Vec<f64>,
    pub p_grid: Vec<f64>,
    pub sim: SimConfig,
    pub opt: OptOptions,
    pub output: Option<PathBuf>,
    pub hist: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    /// Merged raw settings in [`SETTINGS`] order.
    pub settings: Vec<(&'static str, String)>,
}

/// Parses a `key = value` file. Blank lines and `#` comments are skipped;
/// keys may use `-` or `_`.
pub fn parse_config(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::validation(format!("config line {}: expected `key = value`", i + 1))
        })?;
        let key = k.trim().replace('-', "_");
        if !SETTINGS.iter().any(|(name, _, _)| *name == key) {
            return Err(CliError::validation(format!(
                "config line {}: unknown key `{key}`",
                i + 1
            )));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

/// Parses `a,b,c` or `start:stop:count` (inclusive, evenly spaced).
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [start, stop, count] => {
            let start: f64 = parse_f64(start)?;
            let stop: f64 = parse_f64(stop)?;
            let count: usize = count
                .trim()
                .parse()
                .map_err(|_| format!("bad grid count `{count}`"))?;
            match count {
                0 => Vec::new(),
                1 => vec![start],
                _ => (0..count)
                    .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
                    .collect(),
            }
        }
        [_] => s.split(',').map(parse_f64).collect::<Result<_, _>>()?,
        _ => return Err(format!("bad grid `{s}`")),
    };
    if grid.is_empty() {
        return Err("grid is empty".into());
    }
    Ok(grid)
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("`{}` is not a number", s.trim()))
}

/// Formats with 12 significant digits, shortest form, lowercase `inf`/`nan`.
pub fn format_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let fixed = format!("{:.*}", (11 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn setting_value<'a>(settings: &'a [(&'static str, String)], key: &str) -> &'a str {
    settings
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v.as_str())
        .expect("known key")
}

fn number<T: std::str::FromStr>(settings: &[(&'static str, String)], key: &str) -> CliResult<T> {
    let v = setting_value(settings, key);
    v.parse()
        .map_err(|_| CliError::validation(format!("invalid value for `{key}`: `{v}`")))
}

fn grid(settings: &[(&'static str, String)], key: &str) -> CliResult<Vec<f64>> {
    parse_grid(setting_value(settings, key))
        .map_err(|e| CliError::validation(format!("invalid value for `{key}`: {e}")))
}

impl RunSpec {
    /// Merges `flags` over `config` over the defaults and validates the result.
    pub fn resolve(
        command: CommandKind,
        config: &BTreeMap<String, String>,
        flags: &BTreeMap<String, String>,
    ) -> CliResult<Self> {
        let settings: Vec<(&'static str, String)> = SETTINGS
            .iter()
            .map(|&(key, default, _)| {
                let v = flags
                    .get(key)
                    .or_else(|| config.get(key))
                    .map(|s| s.trim().to_string())
                    .unwrap_or_else(|| default.to_string());
                (key, v)
            })
            .collect();
        let s = settings.as_slice();

        let params = SystemParams::builder()
            .total_power(number(s, "total_power")?)
            .split_ratio(number(s, "split_ratio")?)
            .channel_rate(number(s, "channel_rate")?)
            .distance(number(s, "distance")?)
            .pathloss_exp(number(s, "pathloss_exp")?)
            .bandwidth(number(s, "bandwidth")?)
            .noise_density(number(s, "noise_density")?)
            .block_len(number(s, "block_len")?)
            .packet_nats(number(s, "packet_nats")?)
            .harvest_eff(number(s, "harvest_eff")?)
            .weight_uplink(number(s, "weight_uplink")?)
            .build()?;

        let opt = OptOptions {
            rho_init: number(s, "rho_init")?,
            max_iters: number(s, "max_iters")?,
            tol: number(s, "tol")?,
            boundary_eps: number(s, "boundary_eps")?,
        };
        opt.validate()?;

        let num_blocks: u64 = number(s, "num_blocks")?;
        let warmup_blocks = match setting_value(s, "warmup_blocks") {
            "auto" => num_blocks / 100,
            _ => number(s, "warmup_blocks")?,
        };
        let gen_prob = match setting_value(s, "gen_prob") {
            "none" => None,
            _ => Some(number(s, "gen_prob")?),
        };
        let sim = SimConfig {
            num_blocks,
            seed: number(s, "seed")?,
            warmup_blocks,
            snr_mode: setting_value(s, "snr_mode").parse::<SnrMode>()?,
            replications: number(s, "replications")?,
            scheme: setting_value(s, "scheme").parse::<Scheme>()?,
            gen_prob,
            harvest_policy: setting_value(s, "harvest_policy").parse::<HarvestPolicy>()?,
        };
        if matches!(command, CommandKind::Simulate | CommandKind::Compare) {
            sim.validate()?;
        }

        Ok(RunSpec {
            command,
            params,
            rho_grid: grid(s, "rho_grid")?,
            w_grid: grid(s, "w_grid")?,
            p_grid: grid(s, "p_grid")?,
            sim,
            opt,
            output: None,
            hist: None,
            trace: None,
            settings,
        })
    }

    /// The `# key = value` header echoing this spec.
    pub fn header(&self) -> String {
        let mut h = String::new();
        writeln!(h, "# command = {}", self.command.name()).unwrap();
        writeln!(h, "# version = {VERSION}").unwrap();
        for (k, v) in &self.settings {
            writeln!(h, "# {k} = {v}").unwrap();
        }
        h
    }
}

/// Produces the CSV body (column header and rows) for `spec`.
pub fn execute(spec: &RunSpec) -> CliResult<String> {
    match spec.command {
        CommandKind::Analytic => cmd_analytic(spec),
        CommandKind::Optimize => cmd_optimize(spec),
        CommandKind::Simulate => cmd_simulate(spec).map(|(body, _)| body),
        CommandKind::Compare => cmd_compare(spec),
    }
}

fn row(cells: &[String]) -> String {
    let mut line = cells.join(",");
    line.push('\n');
    line
}

pub fn cmd_analytic(spec: &RunSpec) -> CliResult<String> {
    let mut out =
        String::from("rho,w,dl_aoi,ul_aoi_renewal,ul_aoi_reduced,weighted,dl_rate,ul_rate\n");
    let eta = spec.params.harvest_eff();
    for &rho in &spec.rho_grid {
        let loads = derive_constants(&spec.params, rho)?;
        let (dl_rate, ul_rate) = analytic::data_rates(&spec.params, rho)?;
        let reduced = analytic::avg_uplink_aoi(loads.ul_load, eta, UplinkForm::Reduced)?;
        for &w in &spec.w_grid {
            let b = analytic::weighted_sum_aoi(&spec.params, rho, w)?;
            out += &row(&[
                format_num(rho),
                format_num(w),
                format_num(b.downlink),
                format_num(b.uplink),
                format_num(reduced),
                format_num(b.weighted),
                format_num(dl_rate),
                format_num(ul_rate),
            ]);
        }
    }
    Ok(out)
}

pub fn cmd_optimize(spec: &RunSpec) -> CliResult<String> {
    let mut out = String::from("w,rho_star,aoi_star,method,iterations\n");
    for r in sweep_w(&spec.params, &spec.w_grid, &spec.opt)? {
        out += &row(&[
            format_num(r.w),
            format_num(r.rho_star),
            format_num(r.aoi_star),
            r.method.to_string(),
            r.iterations.to_string(),
        ]);
    }
    Ok(out)
}

const SIM_COLUMNS: &str =
    "replication,dl_aoi,ul_aoi,weighted_aoi,dl_rate,ul_rate,dl_service,ul_service,\
energy_block_fraction,dl_packets,ul_packets,blocks,se_dl_aoi,se_ul_aoi,se_weighted_aoi\n";

/// Returns the CSV body and the report it came from.
pub fn cmd_simulate(spec: &RunSpec) -> CliResult<(String, SimReport)> {
    let report = simulator::simulate(&spec.params, &spec.sim)?;
    let w = report.w;
    let mut out = String::from(SIM_COLUMNS);
    for (i, r) in report.replications.iter().enumerate() {
        out += &row(&[
            i.to_string(),
            format_num(r.mean_dl_aoi()),
            format_num(r.mean_ul_aoi()),
            format_num((1.0 - w) * r.mean_dl_aoi() + w * r.mean_ul_aoi()),
            format_num(r.dl_rate()),
            format_num(r.ul_rate()),
            format_num(r.mean_dl_service()),
            format_num(r.mean_ul_service()),
            format_num(r.energy_block_fraction()),
            r.dl_deliveries.to_string(),
            r.ul_deliveries.to_string(),
            r.measured_blocks.to_string(),
            "nan".into(),
            "nan".into(),
            "nan".into(),
        ]);
    }
    let packets = |f: fn(&simulator::ReplicationStats) -> u64| {
        report.replications.iter().map(f).sum::<u64>().to_string()
    };
    out += &row(&[
        "all".into(),
        format_num(report.mean_dl_aoi),
        format_num(report.mean_ul_aoi),
        format_num(report.weighted_aoi),
        format_num(report.dl_rate),
        format_num(report.ul_rate),
        format_num(report.mean_dl_service),
        format_num(report.mean_ul_service),
        format_num(report.energy_block_fraction),
        packets(|r| r.dl_deliveries),
        packets(|r| r.ul_deliveries),
        packets(|r| r.measured_blocks),
        format_num(report.std_error_dl_aoi),
        format_num(report.std_error_ul_aoi),
        format_num(report.std_error_weighted_aoi),
    ]);
    Ok((out, report))
}

pub fn cmd_compare(spec: &RunSpec) -> CliResult<String> {
    let mut out = String::from("p,rho_ts,R_ps,R_ts,aoi_ps,aoi_ts\n");
    let theta = spec.params.theta();
    let ps_config = SimConfig {
        scheme: Scheme::PowerSplit,
        gen_prob: None,
        ..spec.sim
    };
    for &p in &spec.p_grid {
        let rho_ts = analytic::ts_equivalent_rho(p, theta)?;
        let ts = simulator::run_time_splitting(&spec.params, p, &ps_config)?;
        let ps = simulator::run_power_splitting(&spec.params, rho_ts, &ps_config)?;
        out += &row(&[
            format_num(p),
            format_num(rho_ts),
            format_num(ps.weighted_rate()),
            format_num(ts.weighted_rate()),
            format_num(ps.weighted_aoi),
            format_num(ts.weighted_aoi),
        ]);
    }
    Ok(out)
}

fn hist_csv(report: &SimReport) -> String {
    let mut out = String::from("kind,j,count\n");
    let kinds: [(&str, &Histogram); 3] = [
        ("dl_service", &report.dl_service_hist),
        ("ul_service", &report.ul_service_hist),
        ("harvest_slot", &report.harvest_slot_hist),
    ];
    for (kind, hist) in kinds {
        for (j, count) in hist {
            writeln!(out, "{kind},{j},{count}").unwrap();
        }
    }
    out
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn emit(target: Option<&Path>, contents: &str) -> CliResult<()> {
    match target {
        Some(path) => write_file(path, contents),
        None => std::io::stdout()
            .lock()
            .write_all(contents.as_bytes())
            .map_err(|e| CliError::io(format!("stdout: {e}"))),
    }
}

/// Runs `spec` and writes all requested outputs.
pub fn run_spec(spec: &RunSpec) -> CliResult<()> {
    let header = spec.header();
    let body = if spec.command == CommandKind::Simulate {
        let (body, report) = cmd_simulate(spec)?;
        if let Some(path) = &spec.hist {
            write_file(path, &(header.clone() + &hist_csv(&report)))?;
        }
        if let Some(path) = &spec.trace {
            let rows = simulator::trace(&spec.params, &spec.sim)?;
            let mut buf = Vec::new();
            simulator::write_trace_csv(&rows, &mut buf).map_err(|e| CliError::io(e.to_string()))?;
            write_file(
                path,
                &(header.clone() + &String::from_utf8(buf).expect("ascii")),
            )?;
        }
        body
    } else {
        execute(spec)?
    };
    emit(spec.output.as_deref(), &(header + &body))
}

/// Reads the `# key = value` header of a previous output.
pub fn parse_header(text: &str) -> CliResult<(CommandKind, BTreeMap<String, String>)> {
    let mut command = None;
    let mut version = None;
    let mut settings = String::new();
    for line in text.lines() {
        let Some(rest) = line.strip_prefix("# ") else {
            break;
        };
        match rest.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
            Some(("command", v)) => command = Some(v.to_string()),
            Some(("version", v)) => version = Some(v.to_string()),
            _ => {
                settings.push_str(rest);
                settings.push('\n');
            }
        }
    }
    let command = command.ok_or_else(|| CliError::validation("no `command` line in header"))?;
    let kind = CommandKind::from_name(&command)
        .ok_or_else(|| CliError::validation(format!("unknown command `{command}` in header")))?;
    match version {
        Some(v) if v == VERSION => {}
        Some(v) => {
            return Err(CliError::validation(format!(
                "header written by version {v}, this is {VERSION}"
            )))
        }
        None => return Err(CliError::validation("no `version` line in header")),
    }
    Ok((kind, parse_config(&settings)?))
}

fn command_line() -> Command {
    let setting_args: Vec<Arg> = SETTINGS
        .iter()
        .map(|&(key, default, help)| {
            Arg::new(key)
                .long(key)
                .alias(key.replace('_', "-"))
                .value_name("VALUE")
                .help(format!("{help} [default: {default}]"))
                .allow_hyphen_values(true)
        })
        .collect();
    let common = |cmd: Command| {
        cmd.args(setting_args.clone())
            .arg(
                Arg::new("config")
                    .long("config")
                    .value_name("FILE")
                    .help("key = value settings file"),
            )
            .arg(
                Arg::new("output")
                    .short('o')
                    .long("output")
                    .value_name("FILE")
                    .help("write CSV here instead of stdout"),
            )
    };
    Command::new("twoway-aoi")
        .version(VERSION)
        .about("Age of Information for a wirelessly powered two-way link")
        .subcommand_required(true)
        .subcommand(common(
            Command::new("analytic").about("closed-form AoI and rates over rho_grid x w_grid"),
        ))
        .subcommand(common(
            Command::new("optimize").about("optimal split ratio for each w in w_grid"),
        ))
        .subcommand(
            common(Command::new("simulate").about("Monte Carlo run, one row per replication"))
                .arg(
                    Arg::new("hist")
                        .long("hist")
                        .value_name("FILE")
                        .help("write service and harvest histograms"),
                )
                .arg(
                    Arg::new("trace")
                        .long("trace")
                        .value_name("FILE")
                        .help("write the per-block trace of replication 0"),
                ),
        )
        .subcommand(common(
            Command::new("compare").about("time splitting vs power splitting over p_grid"),
        ))
        .subcommand(
            Command::new("replay")
                .about("regenerate an output file from its header")
                .arg(Arg::new("file").required(true).value_name("FILE"))
                .arg(
                    Arg::new("output")
                        .short('o')
                        .long("output")
                        .value_name("FILE")
                        .action(ArgAction::Set),
                ),
        )
}

fn path_arg(m: &ArgMatches, id: &str) -> Option<PathBuf> {
    m.try_get_one::<String>(id)
        .ok()
        .flatten()
        .map(PathBuf::from)
}

fn dispatch(matches: &ArgMatches) -> CliResult<()> {
    let (name, m) = matches.subcommand().expect("subcommand required");
    if name == "replay" {
        let file = m.get_one::<String>("file").expect("required");
        let text =
            std::fs::read_to_string(file).map_err(|e| CliError::io(format!("{file}: {e}")))?;
        let (kind, settings) = parse_header(&text)?;
        let mut spec = RunSpec::resolve(kind, &settings, &BTreeMap::new())?;
        spec.output = path_arg(m, "output");
        return run_spec(&spec);
    }
    let kind = CommandKind::from_name(name).expect("registered subcommand");
    let config = match m.get_one::<String>("config") {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{path}: {e}")))?;
            parse_config(&text)?
        }
        None => BTreeMap::new(),
    };
    let flags: BTreeMap<String, String> = SETTINGS
        .iter()
        .filter_map(|&(key, _, _)| {
            m.get_one::<String>(key)
                .map(|v| (key.to_string(), v.clone()))
        })
        .collect();
    let mut spec = RunSpec::resolve(kind, &config, &flags)?;
    spec.output = path_arg(m, "output");
    spec.hist = path_arg(m, "hist");
    spec.trace = path_arg(m, "trace");
    run_spec(&spec)
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command_line().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&matches) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
