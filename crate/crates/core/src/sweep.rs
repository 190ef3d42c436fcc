//! Parameter sweeps over the packet rate or the node count.
//!
//! A sweep evaluates every grid point analytically, by simulation, or both,
//! and yields one [`SweepRow`] per point in grid order. Rows serialize to a
//! flat CSV or JSON table with a fixed column set.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::NetworkParams;
use crate::simulator::{simulate, SimulationConfig, DEFAULT_STAGE_CAP};
use crate::solvers::{max_node_count, max_packet_rate, solve_fixed_point, SolverConfig};

pub const CSV_HEADER: [&str; 16] = [
    "var", "p", "N", "w0", "ptx_a", "pcl_a", "pidle_a", "mu_a", "aoi_a", "ptx_s", "pcl_s", "mu_s",
    "aoi_s", "aoi_s_se", "seed", "status",
];

/// Gap kept below `p_max` when a packet-rate grid runs to capacity.
pub const CAPACITY_MARGIN: f64 = 1e-4;

/// Largest relative gap between simulated and analytic columns before a
/// long-horizon row is flagged.
pub const AGREEMENT_TOLERANCE: f64 = 0.05;

/// Horizon from which simulated columns are held to
/// [`AGREEMENT_TOLERANCE`].
pub const AGREEMENT_HORIZON: u64 = 10_000_000;

const SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variable {
    #[serde(rename = "p")]
    PacketRate,
    #[serde(rename = "N")]
    NodeCount,
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variable::PacketRate => "p",
            Variable::NodeCount => "N",
        })
    }
}

impl FromStr for Variable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p" | "packet_rate" => Ok(Variable::PacketRate),
            "N" | "n" | "n_nodes" => Ok(Variable::NodeCount),
            _ => Err(Error::Config(format!("unknown sweep variable `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("unknown output format `{s}`"))),
        }
    }
}

/// One curve: the fixed value of the non-swept variable and its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub fixed: f64,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: Variable,
    /// One entry per curve family member, each with its own grid.
    pub curves: Vec<Curve>,
    pub min_window: u32,
    pub analytic: bool,
    pub simulate: bool,
    pub horizon: u64,
    pub warmup: u64,
    /// Row `k` is simulated with seed `base_seed + k`.
    pub base_seed: u64,
    pub stage_cap: u32,
    pub output: Option<PathBuf>,
    pub format: Format,
}

/// Keys accepted by [`SweepSpec::from_config`].
pub const CONFIG_KEYS: [&str; 16] = [
    "var",
    "grid",
    "grid_start",
    "grid_stop",
    "grid_points",
    "grid_scale",
    "n",
    "p",
    "w0",
    "modes",
    "horizon",
    "warmup",
    "seed",
    "stage_cap",
    "out",
    "format",
];

/// Parses flat `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim().to_string();
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "line {}: unknown key `{key}`",
                lineno + 1
            )));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{key}`",
                lineno + 1
            )));
        }
    }
    Ok(map)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse_value::<f64>(key, v))
        .collect()
}

fn nodes(value: f64) -> Result<u32> {
    if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
        Ok(value as u32)
    } else {
        Err(Error::domain("N", value, "positive integer"))
    }
}

impl SweepSpec {
    /// Builds a spec from configuration pairs (file entries with command-line
    /// overrides already applied).
    pub fn from_config(cfg: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| cfg.get(k).map(String::as_str);
        let variable: Variable = get("var")
            .ok_or_else(|| Error::Config("missing `var`".into()))?
            .parse()?;
        let min_window: u32 = get("w0").map_or(Ok(8), |v| parse_value("w0", v))?;
        let fixed_key = match variable {
            Variable::PacketRate => "n",
            Variable::NodeCount => "p",
        };
        let fixed = parse_list(
            fixed_key,
            get(fixed_key).ok_or_else(|| Error::Config(format!("missing `{fixed_key}`")))?,
        )?;

        let (analytic, simulate) = match get("modes") {
            None => (true, false),
            Some(v) => {
                let mut modes = (false, false);
                for m in v.split(',').map(str::trim) {
                    match m {
                        "analytic" => modes.0 = true,
                        "simulate" => modes.1 = true,
                        _ => return Err(Error::Config(format!("unknown mode `{m}`"))),
                    }
                }
                modes
            }
        };
        let horizon: u64 = get("horizon").map_or(Ok(1_000_000), |v| {
            parse_value::<f64>("horizon", v).map(|h| h as u64)
        })?;
        let warmup: u64 = get("warmup").map_or(Ok(horizon / 10), |v| {
            parse_value::<f64>("warmup", v).map(|h| h as u64)
        })?;
        let base_seed: u64 = get("seed").map_or(Ok(1), |v| parse_value("seed", v))?;
        let stage_cap: u32 =
            get("stage_cap").map_or(Ok(DEFAULT_STAGE_CAP), |v| parse_value("stage_cap", v))?;
        let format: Format = get("format").map_or(Ok(Format::Csv), str::parse)?;
        let output = get("out").map(PathBuf::from);

        let solver = SolverConfig::default();
        let mut curves = Vec::with_capacity(fixed.len());
        for &f in &fixed {
            let grid = match get("grid") {
                Some(list) => {
                    if ["grid_start", "grid_stop", "grid_points", "grid_scale"]
                        .iter()
                        .any(|k| cfg.contains_key(*k))
                    {
                        return Err(Error::Config(
                            "`grid` excludes the grid_* range keys".into(),
                        ));
                    }
                    parse_list("grid", list)?
                }
                None => range_grid(cfg, variable, f, min_window, &solver)?,
            };
            curves.push(Curve { fixed: f, grid });
        }
        let spec = SweepSpec {
            variable,
            curves,
            min_window,
            analytic,
            simulate,
            horizon,
            warmup,
            base_seed,
            stage_cap,
            output,
            format,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.curves.is_empty() {
            return Err(Error::Config("no curves".into()));
        }
        if !self.analytic && !self.simulate {
            return Err(Error::Config("no mode selected".into()));
        }
        for curve in &self.curves {
            if curve.grid.is_empty() {
                return Err(Error::Config("empty grid".into()));
            }
            if curve.grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("grid must be strictly increasing".into()));
            }
            for (p, n) in curve.grid.iter().map(|&x| self.point(curve.fixed, x)) {
                NetworkParams::new(nodes(n)?, p, self.min_window)?;
            }
        }
        if self.simulate {
            for curve in &self.curves {
                let (p, n) = self.point(curve.fixed, curve.grid[0]);
                let params = NetworkParams::new(nodes(n)?, p, self.min_window)?;
                self.sim_config(params, 0).validate()?;
            }
        }
        Ok(())
    }

    /// `(p, N)` of a grid value on the curve with fixed value `fixed`.
    fn point(&self, fixed: f64, x: f64) -> (f64, f64) {
        match self.variable {
            Variable::PacketRate => (x, fixed),
            Variable::NodeCount => (fixed, x),
        }
    }

    fn sim_config(&self, params: NetworkParams, seed: u64) -> SimulationConfig {
        let mut cfg = SimulationConfig::new(params, self.horizon, self.warmup, seed);
        cfg.stage_cap = self.stage_cap;
        cfg
    }

    pub fn n_rows(&self) -> usize {
        self.curves.iter().map(|c| c.grid.len()).sum()
    }
}

fn range_grid(
    cfg: &BTreeMap<String, String>,
    variable: Variable,
    fixed: f64,
    min_window: u32,
    solver: &SolverConfig,
) -> Result<Vec<f64>> {
    let get = |k: &str| {
        cfg.get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("missing `grid` or `{k}`")))
    };
    let start: f64 = parse_value("grid_start", get("grid_start")?)?;
    let points: usize = parse_value("grid_points", get("grid_points")?)?;
    let stop = match get("grid_stop")? {
        "max" => match variable {
            Variable::PacketRate => {
                max_packet_rate(nodes(fixed)?, min_window, solver)? - CAPACITY_MARGIN
            }
            Variable::NodeCount => max_node_count(fixed, min_window, solver)? as f64,
        },
        v => parse_value("grid_stop", v)?,
    };
    let log = match cfg.get("grid_scale").map(String::as_str) {
        None | Some("linear") => false,
        Some("log") => true,
        Some(v) => return Err(Error::Config(format!("unknown grid_scale `{v}`"))),
    };
    if points == 0 || stop.partial_cmp(&start).is_none_or(|o| o.is_lt()) || (log && start <= 0.0) {
        return Err(Error::Config(format!(
            "bad grid range [{start}, {stop}] x {points}"
        )));
    }
    let mut grid: Vec<f64> = (0..points)
        .map(|k| {
            let t = if points == 1 {
                0.0
            } else {
                k as f64 / (points - 1) as f64
            };
            if log {
                (start.ln() + t * (stop.ln() - start.ln())).exp()
            } else {
                start + t * (stop - start)
            }
        })
        .collect();
    if variable == Variable::NodeCount {
        grid.iter_mut().for_each(|x| *x = x.round());
        grid.dedup();
    } else if let Some(last) = grid.last_mut() {
        *last = stop;
    }
    Ok(grid)
}

/// One grid point. Analytic and simulated columns are filled independently;
/// empty columns were not requested or have no value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub var: Variable,
    pub p: f64,
    #[serde(rename = "N")]
    pub n: u32,
    pub w0: u32,
    pub ptx_a: Option<f64>,
    pub pcl_a: Option<f64>,
    pub pidle_a: Option<f64>,
    pub mu_a: Option<f64>,
    pub aoi_a: Option<f64>,
    pub ptx_s: Option<f64>,
    pub pcl_s: Option<f64>,
    pub mu_s: Option<f64>,
    pub aoi_s: Option<f64>,
    pub aoi_s_se: Option<f64>,
    pub seed: u64,
    /// `ok`, `flagged`, `unstable`, or the reason code of an infeasible
    /// point.
    pub status: String,
}

impl SweepRow {
    fn empty(var: Variable, p: f64, n: u32, w0: u32, seed: u64) -> Self {
        SweepRow {
            var,
            p,
            n,
            w0,
            ptx_a: None,
            pcl_a: None,
            pidle_a: None,
            mu_a: None,
            aoi_a: None,
            ptx_s: None,
            pcl_s: None,
            mu_s: None,
            aoi_s: None,
            aoi_s_se: None,
            seed,
            status: "ok".into(),
        }
    }

    /// Swept value of this row.
    pub fn x(&self) -> f64 {
        match self.var {
            Variable::PacketRate => self.p,
            Variable::NodeCount => self.n as f64,
        }
    }

    /// Fixed value of the curve this row belongs to.
    pub fn curve(&self) -> f64 {
        match self.var {
            Variable::PacketRate => self.n as f64,
            Variable::NodeCount => self.p,
        }
    }

    /// Largest relative gap over the paired analytic/simulated columns that
    /// are both present.
    pub fn max_relative_gap(&self) -> Option<f64> {
        let pairs = [
            (self.ptx_a, self.ptx_s),
            (self.pcl_a, self.pcl_s),
            (self.mu_a, self.mu_s),
            (self.aoi_a, self.aoi_s),
        ];
        pairs
            .iter()
            .filter_map(|&(a, s)| Some(relative_gap(a?, s?)))
            .reduce(f64::max)
    }
}

fn relative_gap(analytic: f64, simulated: f64) -> f64 {
    let d = (simulated - analytic).abs();
    if analytic == 0.0 {
        d
    } else {
        d / analytic.abs()
    }
}

/// Rounds to the precision written to result tables.
pub fn round_significant(x: f64) -> f64 {
    format_number(x).parse().unwrap_or(x)
}

fn round_opt(x: Option<f64>) -> Option<f64> {
    x.filter(|v| v.is_finite()).map(round_significant)
}

/// `x` with 12 significant digits, positional when that is short.
pub fn format_number(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = s.split_once('e').unwrap_or((&s, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, x);
        if fixed.contains('.') {
            fixed
                .trim_end_matches('0')
                .trim_end_matches('.')
                .to_string()
        } else {
            fixed
        }
    } else {
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{mantissa}e{exp}")
    }
}

fn evaluate(spec: &SweepSpec, fixed: f64, x: f64, index: usize) -> Result<SweepRow> {
    let (p, n) = spec.point(fixed, x);
    let n = nodes(n)?;
    let seed = spec.base_seed.wrapping_add(index as u64);
    let params = NetworkParams::new(n, p, spec.min_window)?;
    let mut row = SweepRow::empty(spec.variable, p, n, spec.min_window, seed);

    if spec.analytic {
        match solve_fixed_point(&params, &SolverConfig::default()) {
            Ok(sol) => {
                row.ptx_a = round_opt(Some(sol.p_tx));
                row.pcl_a = round_opt(Some(sol.p_cl));
                row.pidle_a = round_opt(Some(sol.p_idle));
                row.mu_a = round_opt(Some(sol.mu));
                row.aoi_a = round_opt(sol.avg_aoi);
                if !sol.stable {
                    row.status = "unstable".into();
                }
            }
            Err(e) if e.is_infeasible() => row.status = e.reason_code().into(),
            Err(e) => return Err(e),
        }
    }
    if spec.simulate {
        let stats = simulate(&spec.sim_config(params, seed))?;
        row.ptx_s = round_opt(Some(stats.empirical_p_tx));
        row.pcl_s = round_opt(Some(stats.empirical_p_cl));
        row.mu_s = round_opt(Some(stats.empirical_mu));
        row.aoi_s = round_opt(Some(stats.mean_aoi));
        row.aoi_s_se = round_opt(Some(stats.aoi_standard_error));
        if spec.analytic
            && row.status == "ok"
            && spec.horizon >= AGREEMENT_HORIZON
            && row
                .max_relative_gap()
                .is_some_and(|g| g >= AGREEMENT_TOLERANCE)
        {
            row.status = "flagged".into();
        }
    }
    Ok(row)
}

/// Evaluates every grid point, in parallel, returning rows in grid order
/// (curve by curve).
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let points: Vec<(f64, f64)> = spec
        .curves
        .iter()
        .flat_map(|c| c.grid.iter().map(move |&x| (c.fixed, x)))
        .collect();
    points
        .par_iter()
        .enumerate()
        .map(|(k, &(fixed, x))| evaluate(spec, fixed, x, k))
        .collect()
}

fn cell(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.var.to_string(),
            format_number(r.p),
            r.n.to_string(),
            r.w0.to_string(),
            cell(r.ptx_a),
            cell(r.pcl_a),
            cell(r.pidle_a),
            cell(r.mu_a),
            cell(r.aoi_a),
            cell(r.ptx_s),
            cell(r.pcl_s),
            cell(r.mu_s),
            cell(r.aoi_s),
            cell(r.aoi_s_se),
            r.seed.to_string(),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, rows)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Writes `rows` to `path`.
pub fn emit(rows: &[SweepRow], format: Format, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config("no rows to write".into()));
    }
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        Format::Csv => write_csv(rows, file),
        Format::Json => write_json(rows, file),
    }
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Config("unexpected CSV header".into()));
    }
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            parse_value("cell", s).map(Some)
        }
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record?;
        rows.push(SweepRow {
            var: r[0].parse()?,
            p: parse_value("p", &r[1])?,
            n: parse_value("N", &r[2])?,
            w0: parse_value("w0", &r[3])?,
            ptx_a: opt(&r[4])?,
            pcl_a: opt(&r[5])?,
            pidle_a: opt(&r[6])?,
            mu_a: opt(&r[7])?,
            aoi_a: opt(&r[8])?,
            ptx_s: opt(&r[9])?,
            pcl_s: opt(&r[10])?,
            mu_s: opt(&r[11])?,
            aoi_s: opt(&r[12])?,
            aoi_s_se: opt(&r[13])?,
            seed: parse_value("seed", &r[14])?,
            status: r[15].to_string(),
        });
    }
    Ok(rows)
}

pub fn read_json<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    Ok(serde_json::from_reader(input)?)
}

/// Reads a table written by [`emit`].
pub fn load(format: Format, path: &Path) -> Result<Vec<SweepRow>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    match format {
        Format::Csv => read_csv(file),
        Format::Json => read_json(file),
    }
}

/// True when no step decreases.
pub fn nondecreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] >= w[0])
}

/// Number of sign changes of the discrete slope, ignoring flat steps.
pub fn slope_sign_changes(values: &[f64]) -> usize {
    let signs: Vec<bool> = values
        .windows(2)
        .filter(|w| w[1] != w[0])
        .map(|w| w[1] > w[0])
        .collect();
    signs.windows(2).filter(|s| s[0] != s[1]).count()
}

/// Falls, then rises, with exactly one change of direction.
pub fn is_u_shaped(values: &[f64]) -> bool {
    let first_down = values
        .windows(2)
        .find(|w| w[1] != w[0])
        .is_some_and(|w| w[1] < w[0]);
    first_down && slope_sign_changes(values) == 1
}

/// Rows grouped by curve, in first-seen order.
pub fn curves(rows: &[SweepRow]) -> Vec<(f64, Vec<&SweepRow>)> {
    let mut out: Vec<(f64, Vec<&SweepRow>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(c, _)| *c == r.curve()) {
            Some((_, v)) => v.push(r),
            None => out.push((r.curve(), vec![r])),
        }
    }
    out
}

/// Qualitative checks on the analytic columns of a sweep: attempt and
/// collision probabilities rise with the swept variable, age rises with the
/// node count, and age against packet rate falls and then rises. Returns
/// one message per violation.
pub fn shape_violations(rows: &[SweepRow]) -> Vec<String> {
    let mut out = Vec::new();
    let groups = curves(rows);
    for (fixed, group) in &groups {
        let column = |f: fn(&SweepRow) -> Option<f64>| -> Vec<f64> {
            group.iter().filter_map(|r| f(r)).collect()
        };
        for (name, values) in [
            ("ptx_a", column(|r| r.ptx_a)),
            ("pcl_a", column(|r| r.pcl_a)),
        ] {
            if !nondecreasing(&values) {
                out.push(format!("curve {fixed}: {name} decreases"));
            }
        }
        let aoi = column(|r| r.aoi_a);
        match group.first().map(|r| r.var) {
            Some(Variable::NodeCount) if !nondecreasing(&aoi) => {
                out.push(format!("curve {fixed}: aoi_a decreases in N"))
            }
            Some(Variable::PacketRate) if aoi.len() >= 3 && !is_u_shaped(&aoi) => {
                out.push(format!("curve {fixed}: aoi_a is not U-shaped in p"))
            }
            _ => {}
        }
    }
    if rows.first().map(|r| r.var) == Some(Variable::PacketRate) {
        let mut by_p: BTreeMap<u64, Vec<(u32, f64)>> = BTreeMap::new();
        for r in rows {
            if let Some(a) = r.aoi_a {
                by_p.entry(r.p.to_bits()).or_default().push((r.n, a));
            }
        }
        for (bits, mut pts) in by_p {
            pts.sort_by_key(|&(n, _)| n);
            let values: Vec<f64> = pts.iter().map(|&(_, a)| a).collect();
            if !nondecreasing(&values) {
                out.push(format!("p {}: aoi_a decreases in N", f64::from_bits(bits)));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> SweepSpec {
        SweepSpec::from_config(&parse_config(text).unwrap()).unwrap()
    }

    #[test]
    fn number_format_keeps_twelve_digits() {
        assert_eq!(format_number(2.0 / 9.0), "0.222222222222");
        assert_eq!(format_number(0.05), "0.05");
        assert_eq!(format_number(20.0), "20");
        assert_eq!(format_number(1.0e-7 / 3.0), "3.33333333333e-8");
        assert_eq!(format_number(123456.7890123456), "123456.789012");
        for x in [1.0 / 3.0, 7.123e-9, 98765.4321, 1e15 / 7.0] {
            let r = round_significant(x);
            assert_eq!(round_significant(r), r);
            assert!((r - x).abs() <= 1e-11 * x.abs());
        }
    }

    #[test]
    fn config_parsing() {
        let map = parse_config("# sweep\nvar = p\n n = 1 # one node\ngrid = 0.05\n").unwrap();
        assert_eq!(map["n"], "1");
        assert!(parse_config("var p").is_err());
        assert!(parse_config("bogus = 1").is_err());
        assert!(parse_config("var = p\nvar = N").is_err());
    }

    #[test]
    fn single_point_sweep() {
        let spec = config("var = p\nn = 1\ngrid = 0.05\n");
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mu_a, Some(round_significant(2.0 / 9.0)));
        assert_eq!(rows[0].status, "ok");
        assert_eq!(rows[0].ptx_s, None);
    }

    #[test]
    fn grid_must_increase() {
        let map = parse_config("var = p\nn = 5\ngrid = 0.02, 0.01\n").unwrap();
        assert!(SweepSpec::from_config(&map).is_err());
        let map = parse_config("var = N\np = 0.01\ngrid = 2.5\n").unwrap();
        assert!(SweepSpec::from_config(&map).is_err());
        let map = parse_config("var = p\nn = 5\ngrid = 0.01\nmodes = plot\n").unwrap();
        assert!(SweepSpec::from_config(&map).is_err());
    }

    #[test]
    fn capacity_grid_stops_short_of_p_max() {
        let spec =
            config("var = p\nn = 20\ngrid_start = 0.001\ngrid_stop = max\ngrid_points = 5\n");
        let pmax = max_packet_rate(20, 8, &SolverConfig::default()).unwrap();
        let grid = &spec.curves[0].grid;
        assert_eq!(grid.len(), 5);
        assert_eq!(*grid.last().unwrap(), pmax - CAPACITY_MARGIN);
        let rows = run_sweep(&spec).unwrap();
        assert!(rows.iter().all(|r| r.ptx_a.is_some()));
    }

    #[test]
    fn infeasible_point_has_empty_columns() {
        let spec = config("var = p\nn = 20\ngrid = 0.01, 0.03\n");
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows[1].status, "over_capacity");
        assert_eq!(rows[1].ptx_a, None);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text
            .lines()
            .nth(2)
            .unwrap()
            .ends_with(",,,,,,,,,,,2,over_capacity"));
    }

    #[test]
    fn shape_helpers() {
        assert!(is_u_shaped(&[5.0, 3.0, 2.0, 2.0, 4.0]));
        assert!(!is_u_shaped(&[1.0, 2.0, 3.0]));
        assert!(!is_u_shaped(&[3.0, 1.0, 2.0, 1.0]));
        assert_eq!(slope_sign_changes(&[1.0, 2.0, 1.0, 2.0]), 2);
        assert!(nondecreasing(&[1.0, 1.0, 2.0]));
    }
}
