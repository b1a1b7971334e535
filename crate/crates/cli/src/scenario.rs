//! Scenario files: parsing, validation and conversion to library configs.

use std::f64::consts::PI;
use std::fmt;

use serde::Deserialize;

use qfs_core::fullsim::ModeGrid;
use qfs_core::model::{CouplingConvention, SystemConfig, WaveguideArrayConfig};
use qfs_core::spectral::Regime;

/// A schema violation, located at the offending key.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemaError {
    pub key: String,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: key `{}`: {}", self.line, self.key, self.message)
    }
}

impl std::error::Error for SchemaError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FullSim,
    ReducedDelay,
    Analytic,
    Stability,
    ParallelSingle,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FullSim => "full_sim",
            Mode::ReducedDelay => "reduced_delay",
            Mode::Analytic => "analytic",
            Mode::Stability => "stability",
            Mode::ParallelSingle => "parallel_single",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ConventionKey {
    Bosonic,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RegimeKey {
    ShortDelayResonant,
    ShortDelayGeneric,
    LongDelay,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    description: String,
    mode: Mode,
    #[serde(default)]
    outputs: Vec<String>,
    #[serde(default = "yes")]
    plot: bool,
    time_limit: Option<f64>,
    system: RawSystem,
    array: Option<RawArray>,
    grid: Option<RawGrid>,
    numerics: RawNumerics,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    gamma: Vec<f64>,
    delta: Option<Vec<f64>>,
    g0: f64,
    delta0: f64,
    tau: Option<f64>,
    delay_phase_pi: Option<f64>,
    field_speed: Option<f64>,
    convention: Option<ConventionKey>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArray {
    couplings: Vec<f64>,
    propagation: Vec<f64>,
    start: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    half_width: f64,
    modes: Option<usize>,
    center: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNumerics {
    t_end: Option<f64>,
    t_end_tau: Option<f64>,
    step: Option<f64>,
    steps_per_delay: Option<usize>,
    record_every: Option<usize>,
    feedback: Option<bool>,
    regime: Option<RegimeKey>,
    roots: Option<usize>,
}

/// Grid settings; the mode count defaults to the smallest one whose
/// recurrence time is at least twice `t_end`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub center: f64,
    pub half_width: f64,
    pub modes: Option<usize>,
}

/// A validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub mode: Mode,
    pub outputs: Vec<Observable>,
    pub plot: bool,
    pub time_limit: Option<f64>,
    pub system: SystemConfig,
    pub array: Option<WaveguideArrayConfig>,
    /// Zero-based guide holding the photon at `t = 0` in `parallel_single`.
    pub start_guide: usize,
    pub grid: Option<GridSpec>,
    pub t_end: f64,
    pub step: f64,
    pub steps_per_delay: usize,
    pub record_every: usize,
    pub feedback: bool,
    pub regime: Option<Regime>,
    pub roots: usize,
}

impl Scenario {
    /// Mode grid for `full_sim`: the `[grid]` section or the library default.
    pub fn mode_grid(&self) -> qfs_core::Result<ModeGrid> {
        match self.grid {
            Some(GridSpec {
                center,
                half_width,
                modes: Some(m),
            }) => ModeGrid::new(center, half_width, m),
            Some(GridSpec {
                center,
                half_width,
                modes: None,
            }) => ModeGrid::with_recurrence(center, half_width, 2.0 * self.t_end),
            None => ModeGrid::for_config(&self.system, self.t_end),
        }
    }

    pub fn waveguides(&self) -> WaveguideArrayConfig {
        self.array.clone().unwrap_or_else(WaveguideArrayConfig::single)
    }
}

/// A requested time-series column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observable {
    /// `|c_j^j|^2`: level `j` with `j` photons in the cavity.
    Cavity(usize),
    /// Probability of `n` photons in the waveguides, summed over guides.
    Photons(usize),
    /// Probability of `n` photons in guide `w` (zero-based).
    GuidePhotons(usize, usize),
    /// One-photon population of guide `w` (zero-based).
    Guide(usize),
    Norm,
    /// Certified decay envelope.
    Envelope,
}

impl Observable {
    pub fn parse(s: &str) -> Option<Self> {
        let num = |t: &str| t.parse::<usize>().ok();
        let parts: Vec<&str> = s.split('_').collect();
        match parts.as_slice() {
            ["norm"] => Some(Observable::Norm),
            ["envelope"] => Some(Observable::Envelope),
            ["cavity", j] => num(j).map(Observable::Cavity),
            ["photons", n] => num(n).map(Observable::Photons),
            ["guide", w] => num(w).filter(|&w| w >= 1).map(|w| Observable::Guide(w - 1)),
            ["guide", w, "photons", n] => match (num(w), num(n)) {
                (Some(w), Some(n)) if w >= 1 => Some(Observable::GuidePhotons(w - 1, n)),
                _ => None,
            },
            _ => None,
        }
    }

    pub fn column(&self) -> String {
        match *self {
            Observable::Cavity(j) => format!("cavity_{j}"),
            Observable::Photons(n) => format!("photons_{n}"),
            Observable::GuidePhotons(w, n) => format!("guide_{}_photons_{n}", w + 1),
            Observable::Guide(w) => format!("guide_{}", w + 1),
            Observable::Norm => "norm".into(),
            Observable::Envelope => "envelope".into(),
        }
    }

    /// Why this observable cannot be produced, if it cannot.
    fn unsupported(&self, mode: Mode, levels: usize, guides: usize) -> Option<String> {
        use Observable::*;
        let allowed = match mode {
            Mode::FullSim => matches!(self, Cavity(_) | Photons(_) | GuidePhotons(..) | Norm),
            Mode::ReducedDelay | Mode::Analytic => matches!(self, Cavity(_) | Norm),
            Mode::Stability => matches!(self, Norm | Envelope),
            Mode::ParallelSingle => matches!(self, Guide(_) | Norm),
        };
        if !allowed {
            return Some(format!("`{}` is not produced by mode {}", self.column(), mode.as_str()));
        }
        match *self {
            Cavity(j) if j >= levels => Some(format!("cavity level {j} does not exist for {levels} levels")),
            Photons(n) | GuidePhotons(_, n) if n >= levels => {
                Some(format!("at most {} photons can be emitted", levels - 1))
            }
            GuidePhotons(w, _) | Guide(w) if w >= guides => Some(format!("guide {} does not exist", w + 1)),
            _ => None,
        }
    }
}

/// Parses and validates a scenario file.
pub fn parse(src: &str) -> Result<Scenario, SchemaError> {
    let raw: RawScenario = toml::from_str(src).map_err(|e| from_toml(src, &e))?;
    let at = |key: &str, message: String| error_at(src, key, message);

    if raw.name.is_empty()
        || !raw
            .name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        return Err(at("name", "use letters, digits, `_` or `-`".into()));
    }

    let s = &raw.system;
    let tau = match (s.tau, s.delay_phase_pi) {
        (Some(t), None) => t,
        (None, Some(p)) => p * PI / s.delta0,
        (Some(_), Some(_)) => return Err(at("system.tau", "give either tau or delay_phase_pi, not both".into())),
        (None, None) => return Err(at("system", "one of tau or delay_phase_pi is required".into())),
    };
    let delta = s.delta.clone().unwrap_or_else(|| vec![0.0; s.gamma.len()]);
    let mut system =
        SystemConfig::new(s.gamma.clone(), delta, s.g0, s.delta0, tau).map_err(|e| at("system", e.to_string()))?;
    if let Some(c) = s.field_speed {
        system = system
            .with_field_speed(c)
            .map_err(|e| at("system.field_speed", e.to_string()))?;
    }
    system = system.with_convention(match s.convention {
        Some(ConventionKey::Uniform) => CouplingConvention::Uniform,
        Some(ConventionKey::Bosonic) | None => CouplingConvention::Bosonic,
    });
    let levels = system.n_levels();

    let uses_array = matches!(raw.mode, Mode::FullSim | Mode::ParallelSingle);
    let (array, start_guide) = match &raw.array {
        Some(_) if !uses_array => {
            return Err(at(
                "array",
                format!("mode {} takes no [array] section", raw.mode.as_str()),
            ));
        }
        Some(a) => {
            let w = WaveguideArrayConfig::new(a.couplings.clone(), a.propagation.clone())
                .map_err(|e| at("array", e.to_string()))?;
            let start = a.start.unwrap_or(1);
            if start == 0 || start > w.n_waveguides() {
                return Err(at(
                    "array.start",
                    format!("start guide must be in 1..={}", w.n_waveguides()),
                ));
            }
            (Some(w), start - 1)
        }
        None if raw.mode == Mode::ParallelSingle => {
            return Err(at("array", "mode parallel_single requires an [array] section".into()));
        }
        None => (None, 0),
    };
    let guides = array.as_ref().map_or(1, |a| a.n_waveguides());

    let grid = match &raw.grid {
        Some(_) if raw.mode != Mode::FullSim => {
            return Err(at("grid", "only mode full_sim uses a [grid] section".into()));
        }
        Some(g) => {
            if !(g.half_width > 0.0) {
                return Err(at("grid.half_width", "must be positive".into()));
            }
            if g.modes.is_some_and(|m| m < 2) {
                return Err(at("grid.modes", "at least two modes are required".into()));
            }
            Some(GridSpec {
                center: g.center.unwrap_or(system.delta0()),
                half_width: g.half_width,
                modes: g.modes,
            })
        }
        None => None,
    };

    let n = &raw.numerics;
    let t_end = match (n.t_end, n.t_end_tau) {
        (Some(t), None) => t,
        (None, Some(k)) => k * tau,
        (Some(_), Some(_)) => return Err(at("numerics.t_end", "give either t_end or t_end_tau, not both".into())),
        (None, None) => return Err(at("numerics", "one of t_end or t_end_tau is required".into())),
    };
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(at(
            if n.t_end.is_some() {
                "numerics.t_end"
            } else {
                "numerics.t_end_tau"
            },
            "must be positive".into(),
        ));
    }
    let step = n.step.unwrap_or(0.02);
    if !(step > 0.0) || step > t_end {
        return Err(at("numerics.step", "must be positive and at most t_end".into()));
    }
    let steps_per_delay = n.steps_per_delay.unwrap_or(32);
    if steps_per_delay < 16 {
        return Err(at("numerics.steps_per_delay", "must be at least 16".into()));
    }
    let record_every = n.record_every.unwrap_or(1);
    if record_every == 0 {
        return Err(at("numerics.record_every", "must be at least 1".into()));
    }
    let regime = n.regime.map(|r| match r {
        RegimeKey::ShortDelayResonant => Regime::ShortDelayResonant,
        RegimeKey::ShortDelayGeneric => Regime::ShortDelayGeneric,
        RegimeKey::LongDelay => Regime::LongDelay,
    });
    if raw.mode == Mode::Analytic {
        if regime.is_none() {
            return Err(at("numerics", "mode analytic requires numerics.regime".into()));
        }
        if levels != 3 {
            return Err(at(
                "system.gamma",
                "mode analytic needs a three-level atom (two gamma entries)".into(),
            ));
        }
    } else if regime.is_some() {
        return Err(at("numerics.regime", "only mode analytic uses a regime".into()));
    }
    if n.feedback.is_some() && !matches!(raw.mode, Mode::ReducedDelay | Mode::Stability) {
        return Err(at(
            "numerics.feedback",
            "only reduced_delay and stability can drop the feedback".into(),
        ));
    }
    if n.roots.is_some() && !matches!(raw.mode, Mode::ReducedDelay | Mode::Stability) {
        return Err(at(
            "numerics.roots",
            "only reduced_delay and stability report roots".into(),
        ));
    }
    if let Some(limit) = raw.time_limit {
        if !(limit > 0.0) {
            return Err(at("time_limit", "must be positive".into()));
        }
    }

    let mut outputs = Vec::with_capacity(raw.outputs.len());
    for name in &raw.outputs {
        let obs = Observable::parse(name).ok_or_else(|| at("outputs", format!("unknown observable `{name}`")))?;
        if let Some(why) = obs.unsupported(raw.mode, levels, guides) {
            return Err(at("outputs", why));
        }
        if outputs.contains(&obs) {
            return Err(at("outputs", format!("`{name}` is listed twice")));
        }
        outputs.push(obs);
    }

    Ok(Scenario {
        name: raw.name,
        description: raw.description,
        mode: raw.mode,
        outputs,
        plot: raw.plot,
        time_limit: raw.time_limit,
        system,
        array,
        start_guide,
        grid,
        t_end,
        step,
        steps_per_delay,
        record_every,
        feedback: n.feedback.unwrap_or(true),
        regime,
        roots: n.roots.unwrap_or(0),
    })
}

/// A schema error at `key`, located in `src`.
pub fn error_at(src: &str, key: &str, message: String) -> SchemaError {
    SchemaError {
        key: key.into(),
        line: locate(src, key),
        message,
    }
}

fn from_toml(src: &str, e: &toml::de::Error) -> SchemaError {
    let message = e.message().trim().to_string();
    let offset = e.span().map_or(0, |s| s.start);
    let line = line_of(src, offset);
    let quoted = message.split('`').nth(1).filter(|_| message.contains('`'));
    let key = match quoted {
        Some(k) => match section_at(src, line) {
            Some(sec) if !k.contains('.') && k != sec => format!("{sec}.{k}"),
            _ => k.to_string(),
        },
        None => key_on_line(src, line).unwrap_or_else(|| section_at(src, line).unwrap_or_default()),
    };
    SchemaError { key, line, message }
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Section header in force at `line`, if any.
fn section_at(src: &str, line: usize) -> Option<String> {
    src.lines()
        .take(line)
        .filter_map(|l| {
            let t = l.trim();
            (t.starts_with('[') && t.ends_with(']'))
                .then(|| t.trim_matches(|c| c == '[' || c == ']').trim().to_string())
        })
        .last()
}

fn key_on_line(src: &str, line: usize) -> Option<String> {
    let text = src.lines().nth(line.checked_sub(1)?)?;
    let (key, _) = text.split_once('=')?;
    let key = key.trim();
    (!key.is_empty()).then(|| match section_at(src, line) {
        Some(sec) => format!("{sec}.{key}"),
        None => key.to_string(),
    })
}

/// Line of `key` (`section.key`, a bare `section`, or a top-level key);
/// falls back to the section header and then to line 1.
fn locate(src: &str, key: &str) -> usize {
    let (section, name) = match key.split_once('.') {
        Some((s, k)) => (Some(s), Some(k)),
        None if src.lines().any(|l| l.trim() == format!("[{key}]")) => (Some(key), None),
        None => (None, Some(key)),
    };
    let mut current: Option<String> = None;
    let mut header = None;
    for (i, l) in src.lines().enumerate() {
        let t = l.trim();
        if t.starts_with('[') && t.ends_with(']') {
            current = Some(t.trim_matches(|c| c == '[' || c == ']').trim().to_string());
            if current.as_deref() == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current.as_deref() != section {
            continue;
        }
        if let (Some(name), Some((k, _))) = (name, t.split_once('=')) {
            if k.trim() == name {
                return i + 1;
            }
        }
    }
    header.unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "demo"
mode = "reduced_delay"
outputs = ["cavity_0", "norm"]

[system]
gamma = [0.3]
g0 = 0.2
delta0 = 50.0
delay_phase_pi = 2.0

[numerics]
t_end = 10.0
"#;

    #[test]
    fn minimal_reduced_scenario() {
        let s = parse(MINIMAL).unwrap();
        assert_eq!(s.mode, Mode::ReducedDelay);
        assert_eq!(s.outputs, vec![Observable::Cavity(0), Observable::Norm]);
        assert!((s.system.tau() - 2.0 * PI / 50.0).abs() < 1e-15);
        assert_eq!(s.steps_per_delay, 32);
        assert!(s.feedback);
    }

    #[test]
    fn unknown_key_is_located() {
        let src = MINIMAL.replace("g0 = 0.2", "g0 = 0.2\ngzero = 1.0");
        let e = parse(&src).unwrap_err();
        assert_eq!(e.key, "system.gzero");
        assert_eq!(e.line, 9);
    }

    #[test]
    fn wrong_type_is_located() {
        let e = parse(&MINIMAL.replace("t_end = 10.0", "t_end = \"long\"")).unwrap_err();
        assert_eq!(e.line, 13);
        assert!(e.key.contains("t_end"), "{e}");
    }

    #[test]
    fn semantic_errors_point_at_their_key() {
        let e = parse(&MINIMAL.replace("\"cavity_0\"", "\"cavity_5\"")).unwrap_err();
        assert_eq!((e.key.as_str(), e.line), ("outputs", 4));
        let e = parse(&MINIMAL.replace("mode = \"reduced_delay\"", "mode = \"parallel_single\"")).unwrap_err();
        assert_eq!(e.key, "array");
        let e = parse(&MINIMAL.replace("gamma = [0.3]", "gamma = [-0.3]")).unwrap_err();
        assert_eq!((e.key.as_str(), e.line), ("system", 6));
        let e = parse(&MINIMAL.replace("delay_phase_pi = 2.0", "")).unwrap_err();
        assert_eq!(e.key, "system");
    }

    #[test]
    fn observable_names_parse_back_to_columns() {
        for name in [
            "cavity_2",
            "photons_1",
            "guide_3_photons_2",
            "guide_1",
            "norm",
            "envelope",
        ] {
            assert_eq!(Observable::parse(name).unwrap().column(), name);
        }
        for bad in ["guide_0", "cavity", "photons_x", "guide_1_photons", ""] {
            assert!(Observable::parse(bad).is_none(), "{bad}");
        }
    }

    #[test]
    fn empty_outputs_are_valid() {
        let s = parse(&MINIMAL.replace("outputs = [\"cavity_0\", \"norm\"]", "outputs = []")).unwrap();
        assert!(s.outputs.is_empty());
    }
}
