//! Run configuration, CSV/JSON output and gnuplot script emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::memory_term::MemoryScheme;
use crate::model_params::{validate_raw, RawParams};
use crate::scalar::{format_exact, lit, Scalar};
use crate::solver::{step_count, Probe, Series, SolverSettings};
use crate::source::{has_integer_corners, SourceSpec};

/// Grid section of a [`RunConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct GridSpec<T> {
    /// Defaults to `params.n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default = "default_cells")]
    pub cells_per_axis: usize,
    /// Per-axis `[lower, upper]`; defaults to the unit cube.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<Vec<[T; 2]>>,
}

fn default_cells() -> usize {
    32
}

impl<T: Scalar> Default for GridSpec<T> {
    fn default() -> Self {
        GridSpec {
            dim: None,
            cells_per_axis: default_cells(),
            extent: None,
        }
    }
}

impl<T: Scalar> GridSpec<T> {
    pub fn cube(cells_per_axis: usize) -> Self {
        GridSpec {
            cells_per_axis,
            ..Self::default()
        }
    }

    pub fn build(&self, n: usize) -> Result<Grid<T>> {
        let dim = self.dim.unwrap_or(n);
        match &self.extent {
            None => Grid::unit(dim, self.cells_per_axis),
            Some(ext) => {
                if ext.len() != dim {
                    return Err(Error::Config(format!(
                        "grid extent has {} axes but dim is {dim}",
                        ext.len()
                    )));
                }
                Grid::new(ext.iter().map(|e| (e[0], e[1])).collect(), self.cells_per_axis)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct Sources<T> {
    #[serde(default)]
    pub f: SourceSpec<T>,
    #[serde(default)]
    pub g: SourceSpec<T>,
}

impl<T: Scalar> Default for Sources<T> {
    fn default() -> Self {
        Sources {
            f: SourceSpec::zero(),
            g: SourceSpec::zero(),
        }
    }
}

/// Settings read by the verification subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct StudySettings<T> {
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_mesh_points")]
    pub mesh_points: usize,
    #[serde(default = "default_eps")]
    pub eps: Vec<T>,
}

fn default_levels() -> usize {
    3
}

fn default_trials() -> usize {
    20
}

fn default_mesh_points() -> usize {
    2000
}

fn default_eps<T: Scalar>() -> Vec<T> {
    [0.1, 0.05, 0.025, 0.0125].iter().map(|&e| lit(e)).collect()
}

impl<T: Scalar> Default for StudySettings<T> {
    fn default() -> Self {
        StudySettings {
            levels: default_levels(),
            trials: default_trials(),
            mesh_points: default_mesh_points(),
            eps: default_eps(),
        }
    }
}

/// Everything a run needs, as read from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct RunConfig<T> {
    pub params: RawParams<T>,
    #[serde(default)]
    pub grid: GridSpec<T>,
    #[serde(default = "default_dt")]
    pub dt: T,
    #[serde(rename = "T", default = "default_t_final")]
    pub t_final: T,
    #[serde(default)]
    pub scheme: MemoryScheme,
    #[serde(default)]
    pub sources: Sources<T>,
    #[serde(default)]
    pub probes: Vec<Probe<T>>,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverSettings<T>,
    /// Write `field_<step>.csv` dumps of `u` at every recorded step.
    #[serde(default)]
    pub dump_fields: bool,
    #[serde(default)]
    pub study: StudySettings<T>,
}

fn default_dt<T: Scalar>() -> T {
    lit(1e-2)
}

fn default_t_final<T: Scalar>() -> T {
    T::one()
}

fn default_stride() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl<T: Scalar> RunConfig<T> {
    /// Config with documented defaults for everything but the parameters.
    pub fn with_params(params: RawParams<T>) -> Self {
        RunConfig {
            params,
            grid: GridSpec::default(),
            dt: default_dt(),
            t_final: default_t_final(),
            scheme: MemoryScheme::default(),
            sources: Sources::default(),
            probes: Vec::new(),
            output_stride: default_stride(),
            output_dir: default_output_dir(),
            seed: 0,
            solver: SolverSettings::default(),
            dump_fields: false,
            study: StudySettings::default(),
        }
    }

    /// Every violated invariant, or an empty list.
    pub fn validate(&self) -> Vec<String> {
        let mut out = validate_raw(&self.params);
        let zero = T::zero();
        if !(self.dt > zero) {
            out.push("dt must be positive".into());
        }
        if !(self.t_final >= zero) {
            out.push("T must be ≥ 0".into());
        }
        if self.dt > zero && self.t_final > zero {
            if self.dt > self.t_final {
                out.push("dt must not exceed T".into());
            } else if step_count(self.t_final, self.dt).is_err() {
                out.push("T must be an integer multiple of dt".into());
            }
        }
        if self.output_stride == 0 {
            out.push("output_stride must be ≥ 1".into());
        }
        if !(self.solver.tol > zero) {
            out.push("solver.tol must be positive".into());
        }
        if let Some(dim) = self.grid.dim {
            if dim != self.params.n {
                out.push(format!("grid.dim ({dim}) must equal params.n ({})", self.params.n));
            }
        }
        for src in [&self.sources.f, &self.sources.g] {
            out.extend(src.validate());
        }
        match self.grid.build(self.params.n) {
            Err(e) => out.push(e.to_string()),
            Ok(grid) => {
                for (name, src) in [("f", &self.sources.f), ("g", &self.sources.g)] {
                    if let Err(e) = src.check_grid(&grid) {
                        out.push(format!("source {name}: {e}"));
                    }
                    if src.exact_pair().is_some() && !has_integer_corners(&grid) {
                        out.push(format!("source {name}: manufactured sources need integer box corners"));
                    }
                }
                for (i, probe) in self.probes.iter().enumerate() {
                    if let Probe::Point { at, .. } = probe {
                        if !grid.contains(at) {
                            out.push(format!("probe {i} lies outside the domain"));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Parses and validates a configuration document.
pub fn parse_config<T: Scalar>(text: &str) -> Result<RunConfig<T>> {
    let config: RunConfig<T> = serde_json::from_str(text).map_err(|e| Error::Config(describe_json_error(&e)))?;
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    Ok(config)
}

pub fn load_config<T: Scalar>(path: impl AsRef<Path>) -> Result<RunConfig<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

fn describe_json_error(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    let unknown = Regex::new(r"unknown (?:field|variant) `([^`]*)`").expect("valid regex");
    if let Some(c) = unknown.captures(&msg) {
        return format!("unknown key: {} (line {}, column {})", &c[1], e.line(), e.column());
    }
    msg
}

/// Writes `t,<names>` followed by one row per record.
pub fn write_series_csv<T: Scalar>(series: &Series<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if series.is_empty() {
        return Err(Error::InvalidInput("cannot write an empty series".into()));
    }
    let mut out = String::from("t");
    for name in &series.names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (t, row) in series.times.iter().zip(&series.rows) {
        out.push_str(&format_exact(*t));
        for v in row {
            out.push(',');
            out.push_str(&format_exact(*v));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_series_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Series<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("{}: empty file", path.display())))?;
    let mut cols = header.split(',');
    if cols.next() != Some("t") {
        return Err(Error::InvalidInput(format!("{}: first column must be t", path.display())));
    }
    let mut series = Series::new(cols.map(str::to_string).collect());
    for (lineno, line) in lines.enumerate() {
        let vals = line
            .split(',')
            .map(|s| parse_value::<T>(s, path, lineno + 2))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != series.names.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "{}: line {} has {} columns",
                path.display(),
                lineno + 2,
                vals.len()
            )));
        }
        series.push(vals[0], vals[1..].to_vec());
    }
    Ok(series)
}

fn parse_value<T: Scalar>(s: &str, path: &Path, line: usize) -> Result<T> {
    let x: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("{}: line {line}: bad number {s:?}", path.display())))?;
    T::from_f64(x).ok_or_else(|| Error::InvalidInput(format!("{}: line {line}: {s} out of range", path.display())))
}

/// Writes a gnuplot script that plots every column of `series_csv` against
/// `t` into an SVG next to `out_path`. The script is not run.
pub fn emit_plot_script(series_csv: impl AsRef<Path>, out_path: impl AsRef<Path>) -> Result<()> {
    let csv = series_csv.as_ref();
    let out_path = out_path.as_ref();
    let text = fs::read_to_string(csv).map_err(|e| Error::io(csv, e))?;
    let header = text.lines().next().unwrap_or("");
    let names: Vec<&str> = header.split(',').skip(1).collect();
    let svg = out_path.with_extension("svg");
    let file_name = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();

    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal svg size 960,600 dynamic background rgb 'white'\n");
    let _ = writeln!(s, "set output '{}'", file_name(&svg));
    s.push_str("set key outside right\nset grid\nset xlabel 't'\n");
    if names.is_empty() {
        s.push_str("# no probe columns\n");
    } else {
        s.push_str("plot \\\n");
        for (i, name) in names.iter().enumerate() {
            let src = if i == 0 { format!("'{}'", file_name(csv)) } else { "''".to_string() };
            let sep = if i + 1 == names.len() { "" } else { ", \\" };
            let _ = writeln!(
                s,
                "  {src} using 1:{} skip 1 with lines title '{}'{sep}",
                i + 2,
                name.replace('_', "\\\\_")
            );
        }
    }
    fs::write(out_path, s).map_err(|e| Error::io(out_path, e))
}

/// Header line plus one value per interior node, in storage order.
pub fn write_field_dump<T: Scalar>(field: &Field<T>, t: T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let g = field.grid();
    let dims: Vec<String> = (0..g.dim()).map(|_| g.points_per_axis().to_string()).collect();
    let mut out = format!("# dims={} h={} t={}\n", dims.join("x"), format_exact(g.spacing(0)), format_exact(t));
    for &v in field.values() {
        out.push_str(&format_exact(v));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Contents of a field dump.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump<T> {
    pub dims: Vec<usize>,
    pub h: T,
    pub t: T,
    pub values: Vec<T>,
}

pub fn read_field_dump<T: Scalar>(path: impl AsRef<Path>) -> Result<FieldDump<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let re = Regex::new(r"^# dims=([0-9x]+) h=(\S+) t=(\S+)$").expect("valid regex");
    let caps = re
        .captures(header)
        .ok_or_else(|| Error::InvalidInput(format!("{}: malformed header {header:?}", path.display())))?;
    let dims = caps[1]
        .split('x')
        .map(|d| d.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::InvalidInput(format!("{}: bad dims", path.display())))?;
    let h = parse_value(&caps[2], path, 1)?;
    let t = parse_value(&caps[3], path, 1)?;
    let values = lines
        .enumerate()
        .map(|(i, l)| parse_value(l, path, i + 2))
        .collect::<Result<Vec<T>>>()?;
    let expected: usize = dims.iter().product();
    if values.len() != expected {
        return Err(Error::ShapeMismatch {
            expected,
            found: values.len(),
        });
    }
    Ok(FieldDump { dims, h, t, values })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json(value: &impl Serialize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Plain CSV with a header and rows of already formatted cells.
pub fn write_table(header: &[&str], rows: &[Vec<String>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
