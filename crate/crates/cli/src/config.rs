//! Run configuration: a TOML file of dotted `section.key = value` entries.
//!
//! Every key is listed in [`KEYS`]; anything else is rejected with the
//! nearest known key as a hint. Relative paths resolve against the config
//! file's directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use qdiff_core::biphoton::KernelModel;
use qdiff_core::imaging::{PhaseProjection, WeightScheme};
use qdiff_core::matter::CouplingOrder;
use qdiff_core::modes::ModeFamily;
use qdiff_core::{PumpCrystalSpec, TransverseGrid};
use toml::Value;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Float,
    Int,
    Bool,
    Str,
    IntList,
    StrList,
    /// A float or the string "auto".
    FloatOrAuto,
}

impl Kind {
    fn describe(self) -> &'static str {
        match self {
            Kind::Float => "a number",
            Kind::Int => "an integer",
            Kind::Bool => "true or false",
            Kind::Str => "a string",
            Kind::IntList => "a list of integers",
            Kind::StrList => "a list of strings",
            Kind::FloatOrAuto => "a number or \"auto\"",
        }
    }
}

/// Every accepted key with its type.
const KEYS: &[(&str, Kind)] = &[
    ("pump.sigma_p_L", Kind::Float),
    ("pump.model", Kind::Str),
    ("grid.samples", Kind::Int),
    ("grid.half_extent", Kind::FloatOrAuto),
    ("schmidt.method", Kind::Str),
    ("schmidt.rank", Kind::Int),
    ("basis.family", Kind::Str),
    ("basis.max_order", Kind::Int),
    ("matter.magnitude", Kind::Str),
    ("matter.phase", Kind::Str),
    ("imaging.orders", Kind::IntList),
    ("imaging.truncations", Kind::IntList),
    ("imaging.schemes", Kind::StrList),
    ("imaging.regime_sign", Kind::FloatOrAuto),
    ("imaging.phase_maps", Kind::Bool),
    ("gates.signal_center", Kind::FloatOrAuto),
    ("gates.signal_fwhm", Kind::FloatOrAuto),
    ("gates.idler_center", Kind::FloatOrAuto),
    ("gates.idler_fwhm", Kind::FloatOrAuto),
    ("gates.pump_center", Kind::FloatOrAuto),
    ("gates.pump_fwhm", Kind::FloatOrAuto),
    ("farfield.enabled", Kind::Bool),
    ("farfield.truncation", Kind::Int),
    ("farfield.refinement", Kind::Int),
    ("farfield.speed_of_light", Kind::Float),
    ("specresolve.enabled", Kind::Bool),
    ("specresolve.omega_bar", Kind::Float),
    ("specresolve.projection", Kind::Str),
    ("tolerances.weight_sum", Kind::Float),
    ("tolerances.gram", Kind::Float),
    ("tolerances.max_tail_mass", Kind::Float),
    ("output.dir", Kind::Str),
    ("output.gallery", Kind::Int),
];

const REQUIRED: &[&str] = &["pump.sigma_p_L", "matter.magnitude"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Svd,
    Analytic,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Svd => "svd",
            Method::Analytic => "analytic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateConfig {
    pub signal_center: f64,
    pub signal_fwhm: f64,
    pub idler_center: f64,
    pub idler_fwhm: f64,
    pub pump_center: f64,
    pub pump_fwhm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pump: PumpCrystalSpec,
    pub grid: TransverseGrid,
    pub method: Method,
    pub rank: usize,
    pub family: ModeFamily,
    pub max_order: u32,
    pub magnitude: PathBuf,
    pub phase: Option<PathBuf>,
    pub orders: Vec<CouplingOrder>,
    pub truncations: Vec<usize>,
    pub schemes: Vec<WeightScheme>,
    pub regime_sign: i8,
    pub phase_maps: bool,
    pub gates: GateConfig,
    pub farfield: bool,
    pub farfield_truncation: usize,
    pub farfield_refinement: usize,
    pub speed_of_light: f64,
    pub specresolve: bool,
    pub omega_bar: f64,
    pub projection: PhaseProjection,
    pub weight_sum_tolerance: f64,
    pub gram_tolerance: f64,
    pub max_tail_mass: f64,
    pub output: PathBuf,
    pub gallery: usize,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn nearest_key(key: &str) -> &'static str {
    KEYS.iter()
        .map(|(k, _)| *k)
        .min_by_key(|k| strsim::levenshtein(key, k))
        .expect("key table is not empty")
}

struct Entries {
    values: BTreeMap<String, Value>,
}

fn mismatch(key: &str, kind: Kind, v: &Value) -> CliError {
    CliError::Config(format!("{key} must be {}, found {v}", kind.describe()))
}

impl Entries {
    fn kind(key: &str) -> Kind {
        KEYS.iter().find(|(k, _)| *k == key).expect("key is listed").1
    }

    fn float(&self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.values.get(key) {
            None => Ok(default),
            Some(Value::Float(f)) => Ok(*f),
            Some(Value::Integer(i)) => Ok(*i as f64),
            Some(v) => Err(mismatch(key, Self::kind(key), v)),
        }
    }

    fn float_or_auto(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::String(s)) if s == "auto" => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(mismatch(key, Kind::FloatOrAuto, v)),
        }
    }

    fn int(&self, key: &str, default: i64) -> Result<i64, CliError> {
        match self.values.get(key) {
            None => Ok(default),
            Some(Value::Integer(i)) => Ok(*i),
            Some(v) => Err(mismatch(key, Kind::Int, v)),
        }
    }

    fn positive_int(&self, key: &str, default: i64) -> Result<usize, CliError> {
        let v = self.int(key, default)?;
        if v < 1 {
            return Err(CliError::Config(format!("{key} must be at least 1, got {v}")));
        }
        Ok(v as usize)
    }

    fn boolean(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.values.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(v) => Err(mismatch(key, Kind::Bool, v)),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(mismatch(key, Kind::Str, v)),
        }
    }

    fn int_list(&self, key: &str, default: &[i64]) -> Result<Vec<i64>, CliError> {
        match self.values.get(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Integer(i) => Ok(*i),
                    _ => Err(mismatch(key, Kind::IntList, &Value::Array(items.clone()))),
                })
                .collect(),
            Some(v) => Err(mismatch(key, Kind::IntList, v)),
        }
    }

    fn str_list(&self, key: &str, default: &[&str]) -> Result<Vec<String>, CliError> {
        match self.values.get(key) {
            None => Ok(default.iter().map(|s| s.to_string()).collect()),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(mismatch(key, Kind::StrList, &Value::Array(items.clone()))),
                })
                .collect(),
            Some(v) => Err(mismatch(key, Kind::StrList, v)),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{key} must be positive, got {v}")))
    }
}

fn core_config(key: &str, e: qdiff_core::Error) -> CliError {
    CliError::Config(format!("{key}: {e}"))
}

/// Parses and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}

/// Parses config text; relative paths resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<RunConfig, CliError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Config(format!("syntax error: {e}")))?;
    let mut values = BTreeMap::new();
    flatten("", &table, &mut values);
    for key in values.keys() {
        if !KEYS.iter().any(|(k, _)| k == key) {
            return Err(CliError::Config(format!(
                "unknown key '{key}'; did you mean '{}'?",
                nearest_key(key)
            )));
        }
    }
    for key in REQUIRED {
        if !values.contains_key(*key) {
            return Err(CliError::Config(format!("missing required key '{key}'")));
        }
    }
    let e = Entries { values };

    let product = positive("pump.sigma_p_L", e.float("pump.sigma_p_L", 0.0)?)?;
    let model: KernelModel = e
        .string("pump.model")?
        .unwrap_or_else(|| "double_gaussian".into())
        .parse()
        .map_err(|err| core_config("pump.model", err))?;
    let pump = PumpCrystalSpec::from_product(product, model).map_err(|err| core_config("pump.sigma_p_L", err))?;

    let samples = e.positive_int("grid.samples", 64)?;
    let method = match e.string("schmidt.method")?.as_deref() {
        None | Some("svd") => Method::Svd,
        Some("analytic") => Method::Analytic,
        Some(other) => {
            return Err(CliError::Config(format!(
                "schmidt.method must be \"svd\" or \"analytic\", got \"{other}\""
            )))
        }
    };
    if method == Method::Analytic && model != KernelModel::DoubleGaussian {
        return Err(CliError::Config(
            "schmidt.method = \"analytic\" needs pump.model = \"double_gaussian\"".into(),
        ));
    }
    let family: ModeFamily = e
        .string("basis.family")?
        .unwrap_or_else(|| "hermite_gauss".into())
        .parse()
        .map_err(|err| core_config("basis.family", err))?;
    let max_order = e.int("basis.max_order", 20)?;
    if !(0..=200).contains(&max_order) {
        return Err(CliError::Config(format!("basis.max_order must be in 0..=200, got {max_order}")));
    }
    let half_extent = match e.float_or_auto("grid.half_extent")? {
        Some(h) => positive("grid.half_extent", h)?,
        None => pump
            .default_half_extent(samples, std::f64::consts::SQRT_2)
            .map_err(|err| core_config("grid.half_extent", err))?,
    };
    let grid = TransverseGrid::new(samples, half_extent).map_err(|err| core_config("grid.samples", err))?;
    pump.check_resolution(&grid).map_err(|err| core_config("grid", err))?;

    let default_rank = (samples * samples).min(256) as i64;
    let rank = e.positive_int("schmidt.rank", default_rank)?;
    let available = match method {
        Method::Svd => samples * samples,
        Method::Analytic => qdiff_core::modes::mode_count(max_order as u32),
    };
    let rank = if e.values.contains_key("schmidt.rank") {
        if rank > available {
            return Err(CliError::Config(format!(
                "schmidt.rank {rank} exceeds the {available} modes available"
            )));
        }
        rank
    } else {
        rank.min(available)
    };

    let resolve = |p: String| {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    let magnitude = resolve(e.string("matter.magnitude")?.expect("required key present"));
    let phase = e.string("matter.phase")?.map(resolve);
    for p in std::iter::once(&magnitude).chain(phase.iter()) {
        if !p.is_file() {
            return Err(CliError::Config(format!("matter file {} does not exist", p.display())));
        }
    }

    let orders = e
        .int_list("imaging.orders", &[1])?
        .into_iter()
        .map(|p| {
            u32::try_from(p)
                .ok()
                .and_then(|p| CouplingOrder::from_index(p).ok())
                .ok_or_else(|| CliError::Config(format!("imaging.orders entries must be 1 or 2, got {p}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let truncations = e
        .int_list("imaging.truncations", &[1, 5, 10, 20])?
        .into_iter()
        .map(|n| {
            if n < 1 || n as usize > rank {
                Err(CliError::Config(format!(
                    "imaging.truncations entries must be in 1..={rank}, got {n}"
                )))
            } else {
                Ok(n as usize)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let schemes = e
        .str_list("imaging.schemes", &["natural", "flattened"])?
        .iter()
        .map(|s| match s.parse::<WeightScheme>() {
            Ok(WeightScheme::Custom) | Err(_) => Err(CliError::Config(format!(
                "imaging.schemes entries must be \"natural\" or \"flattened\", got \"{s}\""
            ))),
            Ok(w) => Ok(w),
        })
        .collect::<Result<Vec<_>, _>>()?;
    for (name, list_empty) in [
        ("imaging.orders", orders.is_empty()),
        ("imaging.truncations", truncations.is_empty()),
        ("imaging.schemes", schemes.is_empty()),
    ] {
        if list_empty {
            return Err(CliError::Config(format!("{name} must not be empty")));
        }
    }
    let regime_sign = match e.float_or_auto("imaging.regime_sign")? {
        None => pump.regime_sign(),
        Some(1.0) => 1,
        Some(-1.0) => -1,
        Some(s) => {
            return Err(CliError::Config(format!(
                "imaging.regime_sign must be 1, -1 or \"auto\", got {s}"
            )))
        }
    };

    // Default gates: narrow band (1%) centered so the largest diffraction
    // wavevector is a quarter of the detector radius, i.e. small angles.
    let radius = (samples / 2 - 1) as f64 * grid.real_step();
    let speed_of_light = positive("farfield.speed_of_light", e.float("farfield.speed_of_light", 1.0)?)?;
    let auto_center = 0.25 * radius * speed_of_light;
    let signal_center = e.float_or_auto("gates.signal_center")?.unwrap_or(auto_center);
    let signal_fwhm = e.float_or_auto("gates.signal_fwhm")?.unwrap_or(0.01 * signal_center.abs());
    let idler_center = e.float_or_auto("gates.idler_center")?.unwrap_or(signal_center);
    let idler_fwhm = e.float_or_auto("gates.idler_fwhm")?.unwrap_or(signal_fwhm);
    let pump_center = e
        .float_or_auto("gates.pump_center")?
        .unwrap_or(signal_center + idler_center);
    let pump_fwhm = e.float_or_auto("gates.pump_fwhm")?.unwrap_or(signal_fwhm);
    let gates = GateConfig {
        signal_center,
        signal_fwhm: positive("gates.signal_fwhm", signal_fwhm)?,
        idler_center,
        idler_fwhm: positive("gates.idler_fwhm", idler_fwhm)?,
        pump_center,
        pump_fwhm: positive("gates.pump_fwhm", pump_fwhm)?,
    };

    let max_truncation = *truncations.iter().max().expect("non-empty");
    let farfield_truncation = e.positive_int("farfield.truncation", max_truncation as i64)?;
    if farfield_truncation > rank {
        return Err(CliError::Config(format!(
            "farfield.truncation {farfield_truncation} exceeds schmidt.rank {rank}"
        )));
    }
    let omega_bar = e.float("specresolve.omega_bar", 0.0)?;
    if !(omega_bar >= 0.0 && omega_bar.is_finite()) {
        return Err(CliError::Config(format!(
            "specresolve.omega_bar must be non-negative, got {omega_bar}"
        )));
    }
    let projection = match e.string("specresolve.projection")?.as_deref() {
        None | Some("radial") => PhaseProjection::Radial,
        Some("x") => PhaseProjection::XAxis,
        Some(other) => {
            return Err(CliError::Config(format!(
                "specresolve.projection must be \"radial\" or \"x\", got \"{other}\""
            )))
        }
    };

    Ok(RunConfig {
        pump,
        grid,
        method,
        rank,
        family,
        max_order: max_order as u32,
        magnitude,
        phase,
        orders,
        truncations,
        schemes,
        regime_sign,
        phase_maps: e.boolean("imaging.phase_maps", false)?,
        gates,
        farfield: e.boolean("farfield.enabled", false)?,
        farfield_truncation,
        farfield_refinement: e.positive_int("farfield.refinement", 1)?,
        speed_of_light,
        specresolve: e.boolean("specresolve.enabled", false)?,
        omega_bar,
        projection,
        weight_sum_tolerance: positive("tolerances.weight_sum", e.float("tolerances.weight_sum", 1e-10)?)?,
        gram_tolerance: positive("tolerances.gram", e.float("tolerances.gram", 1e-6)?)?,
        max_tail_mass: positive("tolerances.max_tail_mass", e.float("tolerances.max_tail_mass", 0.05)?)?,
        output: PathBuf::from(e.string("output.dir")?.unwrap_or_else(|| "qdiff-out".into())),
        gallery: e.int("output.gallery", 12)?.max(0) as usize,
    })
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    let v: Vec<String> = items.into_iter().map(|t| t.to_string()).collect();
    format!("[{}]", v.join(", "))
}

fn quoted<'a>(items: impl IntoIterator<Item = &'a str>) -> String {
    join(items.into_iter().map(|s| format!("\"{s}\"")))
}

fn projection_name(p: PhaseProjection) -> &'static str {
    match p {
        PhaseProjection::Radial => "radial",
        PhaseProjection::XAxis => "x",
    }
}

impl RunConfig {
    /// Resolved settings of one section, as `key = value` lines. These
    /// lines feed both the reproducibility log and the stage cache keys.
    pub fn section(&self, name: &str) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{name}.{k} = {v}");
        };
        match name {
            "pump" => {
                line("sigma_p_L", self.pump.product().to_string());
                line("model", format!("\"{}\"", self.pump.model.name()));
            }
            "grid" => {
                line("samples", self.grid.samples_per_axis().to_string());
                line("half_extent", self.grid.half_extent().to_string());
            }
            "schmidt" => {
                line("method", format!("\"{}\"", self.method.name()));
                line("rank", self.rank.to_string());
            }
            "basis" => {
                line("family", format!("\"{}\"", self.family.name()));
                line("max_order", self.max_order.to_string());
            }
            "matter" => {
                line("magnitude", format!("\"{}\"", self.magnitude.display()));
                if let Some(p) = &self.phase {
                    line("phase", format!("\"{}\"", p.display()));
                }
            }
            "imaging" => {
                line("orders", join(self.orders.iter().map(|o| o.index())));
                line("truncations", join(&self.truncations));
                line("schemes", quoted(self.schemes.iter().map(|s| s.name())));
                line("regime_sign", self.regime_sign.to_string());
                line("phase_maps", self.phase_maps.to_string());
            }
            "gates" => {
                let g = &self.gates;
                line("signal_center", g.signal_center.to_string());
                line("signal_fwhm", g.signal_fwhm.to_string());
                line("idler_center", g.idler_center.to_string());
                line("idler_fwhm", g.idler_fwhm.to_string());
                line("pump_center", g.pump_center.to_string());
                line("pump_fwhm", g.pump_fwhm.to_string());
            }
            "farfield" => {
                line("enabled", self.farfield.to_string());
                line("truncation", self.farfield_truncation.to_string());
                line("refinement", self.farfield_refinement.to_string());
                line("speed_of_light", self.speed_of_light.to_string());
            }
            "specresolve" => {
                line("enabled", self.specresolve.to_string());
                line("omega_bar", self.omega_bar.to_string());
                line("projection", format!("\"{}\"", projection_name(self.projection)));
            }
            "tolerances" => {
                line("weight_sum", self.weight_sum_tolerance.to_string());
                line("gram", self.gram_tolerance.to_string());
                line("max_tail_mass", self.max_tail_mass.to_string());
            }
            "output" => {
                line("gallery", self.gallery.to_string());
            }
            _ => {}
        }
        s
    }

    /// Every resolved setting except the output directory, which does not
    /// affect results.
    pub fn resolved(&self) -> String {
        [
            "pump", "grid", "schmidt", "basis", "matter", "imaging", "gates", "farfield",
            "specresolve", "tolerances", "output",
        ]
        .iter()
        .map(|s| self.section(s))
        .collect()
    }
}
