//! Scenario file schema. Every default lives here; `configs/default.toml`
//! spells them out.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use dampwave_core::escape::{CoverOptions, EscapeOptions, PsiOptions, SampleSpec, TuneGrid};
use dampwave_core::flow::{ClassifyParams, FlowOptions};
use dampwave_core::metric::{AfOptions, Damping, Geometry, MetricModel};
use dampwave_core::ode::OdeOptions;
use dampwave_core::solver::{Forcing, GridSpec, InitialData, CFL_MAX};
use serde::{Deserialize, Serialize};

use crate::error::RunError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Keys every scrambled Halton sequence.
    #[serde(default)]
    pub rng_seed: u64,
    /// Overridden by `--output`; falls back to `$DAMPWAVE_OUTPUT_DIR`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub metric: MetricSpec,
    #[serde(default)]
    pub damping: DampingSpec,
    #[serde(default)]
    pub af: AfSection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub rays: RaysSection,
    #[serde(default)]
    pub gcc: GccSection,
    #[serde(default)]
    pub escape: EscapeSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub led: LedSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    Minkowski,
    /// gⁱʲ = w(r)δⁱʲ, w = 1 + A·(exp(−(r − r_c)²/W²) + exp(−(r + r_c)²/W²));
    /// A ∈ (−1, 10], r_c > 0, W > 0 and w > 0 everywhere.
    TrappedShell {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// |ε| ≤ 1.
    CrosstermToy {
        epsilon: f64,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DampingSpec {
    #[default]
    None,
    Ball {
        center: [f64; 3],
        radius: f64,
        amplitude: f64,
    },
    Shell {
        radius: f64,
        half_width: f64,
        amplitude: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AfSection {
    pub j_max: usize,
    pub samples_per_annulus: usize,
    pub threshold: f64,
    pub delta: f64,
}

impl Default for AfSection {
    fn default() -> Self {
        let d = AfOptions::default();
        Self { j_max: d.j_max, samples_per_annulus: d.samples_per_annulus, threshold: d.threshold, delta: d.delta }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    /// Radius R of the interior region.
    pub r: f64,
    /// Escape margin: a ray has escaped once |x| ≥ max(2R, |x₀| + delta).
    pub delta: f64,
    pub t_max: f64,
    /// Damping level counted as a hit.
    pub a_threshold: f64,
    pub rtol: f64,
    pub atol: f64,
    pub drift_tol: f64,
    pub max_steps: usize,
}

impl Default for FlowSection {
    fn default() -> Self {
        let o = OdeOptions::default();
        Self {
            r: 16.0,
            delta: 1.6,
            t_max: 500.0,
            a_threshold: 0.05,
            rtol: o.rtol,
            atol: o.atol,
            drift_tol: 1e-8,
            max_steps: o.max_steps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RaysSection {
    /// Tangential seeds on the sphere of the stable circular orbit.
    pub tangential: usize,
    /// Radial seeds at the same radius, half outgoing and half incoming.
    pub radial: usize,
    /// Seed radius when the geometry has no stable circular orbit.
    pub radius: Option<f64>,
    /// Allowed relative excursion of trapped rays from the orbit radius.
    pub tolerance: f64,
}

impl Default for RaysSection {
    fn default() -> Self {
        Self { tangential: 64, radial: 64, radius: None, tolerance: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GccSection {
    pub seeds: usize,
    /// Seeds fill {|x| ≤ seed_radius}; defaults to 2·flow.r.
    pub seed_radius: Option<f64>,
    /// Extra tangential seeds on the stable circular orbit, when there is one.
    pub targeted: usize,
    /// When set, the share of trapped rays meeting the damping must equal it.
    pub expect_hit_fraction: Option<f64>,
}

impl Default for GccSection {
    fn default() -> Self {
        Self { seeds: 4096, seed_radius: None, targeted: 256, expect_hit_fraction: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscapeSection {
    /// Ball seeds for the audit that feeds the cover construction.
    pub gcc_seeds: usize,
    pub cover_radius: f64,
    pub cover_ds: f64,
    pub cover_horizon: f64,
    pub damping_alpha_fraction: f64,
    pub c_floor: f64,
    pub psi_outer_factor: f64,
    pub psi_window_margin: f64,
    pub psi_ds: f64,
    pub psi_t_cap: f64,
    pub transit_samples: usize,
    pub bscale_samples: usize,
    pub cover_validation_samples: usize,
    /// Each point yields three samples.
    pub sample_points: usize,
    pub radius_factor: f64,
    pub xi_span: f64,
    pub quantile: f64,
    pub lambdas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    pub c_target: f64,
}

impl Default for EscapeSection {
    fn default() -> Self {
        let e = EscapeOptions::default();
        let s = SampleSpec::default();
        let t = TuneGrid::default();
        Self {
            gcc_seeds: 1024,
            cover_radius: e.cover.radius,
            cover_ds: e.cover.ds,
            cover_horizon: e.cover.horizon,
            damping_alpha_fraction: e.damping_alpha_fraction,
            c_floor: e.c_floor,
            psi_outer_factor: e.psi.outer_factor,
            psi_window_margin: e.psi.window_margin,
            psi_ds: e.psi.ds,
            psi_t_cap: e.psi.t_cap,
            transit_samples: e.psi.transit_samples,
            bscale_samples: e.bscale_samples,
            cover_validation_samples: e.cover_validation_samples,
            sample_points: s.points,
            radius_factor: s.radius_factor,
            xi_span: s.xi_span,
            quantile: s.quantile,
            lambdas: t.lambdas,
            sigmas: t.sigmas,
            gammas: t.gammas,
            epsilon_start: t.epsilon_start,
            epsilon_min: t.epsilon_min,
            c_target: t.c_target,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub n: usize,
    /// Half-width L of the cube [−L, L]³.
    pub extent: f64,
    /// dt·√C_ell/h, at most 0.4.
    pub cfl: f64,
    pub sponge_width: f64,
    pub sponge_strength: f64,
    /// Final time of the `wave` run.
    pub t_end: f64,
    /// Times whose full fields go to wave.bin.
    pub snapshot_times: Vec<f64>,
    /// Relative rounding allowance in the scheme-energy monotonicity check.
    pub monotone_tol: f64,
    pub data: InitialData,
    pub forcing: Forcing,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            n: 96,
            extent: 32.0,
            cfl: CFL_MAX,
            sponge_width: 4.0,
            sponge_strength: 2.0,
            t_end: 80.0,
            snapshot_times: vec![80.0],
            monotone_tol: 1e-13,
            data: InitialData::Bump { center: [0.0; 3], radius: 2.0, amplitude: 1.0, power: 3 },
            forcing: Forcing::None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedExpectation {
    /// ρ(T_last)/ρ(T_prev) ≤ plateau_max.
    Plateau,
    /// ρ(T_last)/ρ(T_prev) ≥ growth_min.
    Growth,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedCase {
    pub label: String,
    pub metric: MetricSpec,
    #[serde(default)]
    pub damping: DampingSpec,
    #[serde(default = "no_expectation")]
    pub expect: LedExpectation,
}

fn no_expectation() -> LedExpectation {
    LedExpectation::None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LedSection {
    pub t_list: Vec<f64>,
    pub plateau_max: f64,
    pub growth_min: f64,
    /// ρ(T_last) of `separation[1]` must exceed that of `separation[0]` by
    /// this relative margin.
    pub separation_min: f64,
    pub separation: Option<[String; 2]>,
    /// Without cases the scenario's own metric and damping form one case.
    pub cases: Vec<LedCase>,
}

impl Default for LedSection {
    fn default() -> Self {
        Self {
            t_list: vec![10.0, 20.0, 40.0, 80.0],
            plateau_max: 1.05,
            growth_min: 1.15,
            separation_min: 0.30,
            separation: None,
            cases: Vec::new(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> RunError {
    RunError::Config(msg.into())
}

fn located(text: &str, e: &toml::de::Error) -> RunError {
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            config_err(format!("{} (line {line})", e.message().trim_end()))
        }
        None => config_err(e.message().trim_end().to_string()),
    }
}

fn positive(name: &str, v: f64) -> Result<(), RunError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("{name} must be positive and finite, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<(), RunError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("{name} must be nonnegative and finite, got {v}")))
    }
}

fn nonempty_positive(name: &str, v: &[f64]) -> Result<(), RunError> {
    if v.is_empty() {
        return Err(config_err(format!("{name} must not be empty")));
    }
    v.iter().try_for_each(|x| positive(name, *x))
}

impl MetricSpec {
    pub fn geometry(&self) -> Geometry {
        match *self {
            MetricSpec::Minkowski => Geometry::Minkowski,
            MetricSpec::TrappedShell { amplitude, center, width } => {
                Geometry::TrappedShell { amplitude, center, width }
            }
            MetricSpec::CrosstermToy { epsilon } => Geometry::CrosstermToy { epsilon },
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        match *self {
            MetricSpec::Minkowski => Ok(()),
            MetricSpec::TrappedShell { amplitude, center, width } => {
                if !(amplitude > -1.0 && amplitude <= 10.0) {
                    return Err(config_err(format!("metric.amplitude must lie in (-1, 10], got {amplitude}")));
                }
                positive("metric.center", center)?;
                positive("metric.width", width)?;
                let (w_min, _) = self.geometry().ellipticity_bounds();
                if w_min > 0.0 {
                    Ok(())
                } else {
                    Err(config_err(format!("metric is not elliptic: min w = {w_min}")))
                }
            }
            MetricSpec::CrosstermToy { epsilon } => {
                if epsilon.abs() <= 1.0 {
                    Ok(())
                } else {
                    Err(config_err(format!("metric.epsilon must satisfy |epsilon| <= 1, got {epsilon}")))
                }
            }
        }
    }
}

impl DampingSpec {
    pub fn damping(&self) -> Damping {
        match *self {
            DampingSpec::None => Damping::None,
            DampingSpec::Ball { center, radius, amplitude } => Damping::Ball { center, radius, amplitude },
            DampingSpec::Shell { radius, half_width, amplitude } => Damping::Shell { radius, half_width, amplitude },
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        match *self {
            DampingSpec::None => Ok(()),
            DampingSpec::Ball { center, radius, amplitude } => {
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(config_err("damping.center must be finite"));
                }
                positive("damping.radius", radius)?;
                nonnegative("damping.amplitude", amplitude)
            }
            DampingSpec::Shell { radius, half_width, amplitude } => {
                positive("damping.radius", radius)?;
                positive("damping.half_width", half_width)?;
                nonnegative("damping.amplitude", amplitude)
            }
        }
    }
}

fn stray_key(input: &toml::Value, canon: &toml::Value, path: &str) -> Option<String> {
    let join = |k: &str| if path.is_empty() { k.to_string() } else { format!("{path}.{k}") };
    match (input, canon) {
        (toml::Value::Table(a), toml::Value::Table(b)) => a.iter().find_map(|(k, v)| match b.get(k) {
            Some(w) => stray_key(v, w, &join(k)),
            None => Some(join(k)),
        }),
        (toml::Value::Array(a), toml::Value::Array(b)) => {
            a.iter().zip(b).enumerate().find_map(|(i, (v, w))| stray_key(v, w, &format!("{path}[{i}]")))
        }
        _ => None,
    }
}

pub fn model(metric: &MetricSpec, damping: &DampingSpec) -> MetricModel {
    MetricModel::new(metric.geometry(), damping.damping())
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, RunError> {
        let cfg: Config = toml::from_str(text).map_err(|e| located(text, &e))?;
        // serde lets extra keys through on unit variants such as
        // `kind = "zero"`; every input key must survive a round trip.
        let input: toml::Value = toml::from_str(text).map_err(|e| located(text, &e))?;
        let canon = toml::Value::try_from(&cfg).map_err(|e| config_err(e.to_string()))?;
        if let Some(path) = stray_key(&input, &canon, "") {
            return Err(config_err(format!("unknown field `{path}`")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), RunError> {
        let bytes = std::fs::read(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes).map_err(|_| config_err("config is not valid UTF-8"))?;
        Ok((Self::parse(text)?, bytes))
    }

    pub fn model(&self) -> MetricModel {
        model(&self.metric, &self.damping)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.metric.validate()?;
        self.damping.validate()?;

        let af = &self.af;
        if af.j_max < 1 || af.j_max > 30 || af.samples_per_annulus == 0 {
            return Err(config_err("af.j_max must lie in [1, 30] and af.samples_per_annulus be positive"));
        }
        positive("af.threshold", af.threshold)?;
        positive("af.delta", af.delta)?;

        let f = &self.flow;
        positive("flow.r", f.r)?;
        positive("flow.delta", f.delta)?;
        positive("flow.t_max", f.t_max)?;
        nonnegative("flow.a_threshold", f.a_threshold)?;
        if !(f.rtol > 0.0 && f.rtol <= 1e-3) {
            return Err(config_err(format!("flow.rtol must lie in (0, 1e-3], got {}", f.rtol)));
        }
        positive("flow.atol", f.atol)?;
        positive("flow.drift_tol", f.drift_tol)?;
        if f.max_steps == 0 {
            return Err(config_err("flow.max_steps must be positive"));
        }

        if let Some(r) = self.rays.radius {
            positive("rays.radius", r)?;
        }
        positive("rays.tolerance", self.rays.tolerance)?;

        if self.gcc.seeds == 0 {
            return Err(config_err("gcc.seeds must be positive"));
        }
        if let Some(r) = self.gcc.seed_radius {
            positive("gcc.seed_radius", r)?;
        }
        if let Some(h) = self.gcc.expect_hit_fraction {
            if !(0.0..=1.0).contains(&h) {
                return Err(config_err("gcc.expect_hit_fraction must lie in [0, 1]"));
            }
        }

        let e = &self.escape;
        if e.gcc_seeds == 0 || e.sample_points == 0 || e.transit_samples == 0 || e.bscale_samples == 0 {
            return Err(config_err("escape sample counts must be positive"));
        }
        for (name, v) in [
            ("escape.cover_radius", e.cover_radius),
            ("escape.cover_ds", e.cover_ds),
            ("escape.cover_horizon", e.cover_horizon),
            ("escape.damping_alpha_fraction", e.damping_alpha_fraction),
            ("escape.c_floor", e.c_floor),
            ("escape.psi_ds", e.psi_ds),
            ("escape.psi_t_cap", e.psi_t_cap),
            ("escape.psi_window_margin", e.psi_window_margin),
            ("escape.radius_factor", e.radius_factor),
            ("escape.epsilon_start", e.epsilon_start),
            ("escape.epsilon_min", e.epsilon_min),
        ] {
            positive(name, v)?;
        }
        if !(e.psi_outer_factor > 1.0 && e.psi_outer_factor < 2.0) {
            return Err(config_err("escape.psi_outer_factor must lie in (1, 2)"));
        }
        if !(e.xi_span > 1.0) {
            return Err(config_err("escape.xi_span must exceed 1"));
        }
        if !(e.quantile >= 0.0 && e.quantile < 0.5) {
            return Err(config_err("escape.quantile must lie in [0, 0.5)"));
        }
        if e.epsilon_min > e.epsilon_start {
            return Err(config_err("escape.epsilon_min must not exceed escape.epsilon_start"));
        }
        nonempty_positive("escape.lambdas", &e.lambdas)?;
        nonempty_positive("escape.sigmas", &e.sigmas)?;
        nonempty_positive("escape.gammas", &e.gammas)?;
        nonnegative("escape.c_target", e.c_target)?;

        let s = &self.solver;
        if s.n < 5 || s.n > 1024 {
            return Err(config_err(format!("solver.n must lie in [5, 1024], got {}", s.n)));
        }
        positive("solver.extent", s.extent)?;
        if !(s.cfl > 0.0 && s.cfl <= CFL_MAX) {
            return Err(config_err(format!("solver.cfl must lie in (0, {CFL_MAX}], got {}", s.cfl)));
        }
        positive("solver.sponge_width", s.sponge_width)?;
        nonnegative("solver.sponge_strength", s.sponge_strength)?;
        positive("solver.t_end", s.t_end)?;
        positive("solver.monotone_tol", s.monotone_tol)?;
        for t in &s.snapshot_times {
            if !(*t >= 0.0 && *t <= s.t_end) {
                return Err(config_err(format!("solver.snapshot_times entry {t} lies outside [0, t_end]")));
            }
        }

        let l = &self.led;
        nonempty_positive("led.t_list", &l.t_list)?;
        if l.t_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err("led.t_list must be strictly increasing"));
        }
        positive("led.plateau_max", l.plateau_max)?;
        positive("led.growth_min", l.growth_min)?;
        nonnegative("led.separation_min", l.separation_min)?;
        let mut labels = BTreeSet::new();
        for c in &l.cases {
            if c.label.is_empty() || !c.label.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-') {
                return Err(config_err(format!("led case label {:?} must be nonempty [A-Za-z0-9_-]", c.label)));
            }
            if !labels.insert(c.label.as_str()) {
                return Err(config_err(format!("duplicate led case label {:?}", c.label)));
            }
            c.metric.validate()?;
            c.damping.validate()?;
        }
        if let Some(pair) = &l.separation {
            for label in pair {
                if !labels.contains(label.as_str()) {
                    return Err(config_err(format!("led.separation names unknown case {label:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn af_options(&self) -> AfOptions {
        AfOptions {
            j_max: self.af.j_max,
            samples_per_annulus: self.af.samples_per_annulus,
            threshold: self.af.threshold,
            delta: self.af.delta,
        }
    }

    pub fn flow_options(&self) -> FlowOptions {
        FlowOptions {
            ode: OdeOptions {
                rtol: self.flow.rtol,
                atol: self.flow.atol,
                max_steps: self.flow.max_steps,
                ..OdeOptions::default()
            },
            drift_tol: self.flow.drift_tol,
        }
    }

    pub fn classify_params(&self) -> ClassifyParams {
        ClassifyParams {
            r: self.flow.r,
            delta: self.flow.delta,
            t_max: self.flow.t_max,
            a_threshold: self.flow.a_threshold,
        }
    }

    pub fn escape_options(&self) -> EscapeOptions {
        let e = &self.escape;
        EscapeOptions {
            r: self.flow.r,
            cover: CoverOptions {
                radius: e.cover_radius,
                ds: e.cover_ds,
                horizon: e.cover_horizon,
                damping_alpha: 0.0,
                a_threshold: 0.0,
            },
            psi: PsiOptions {
                outer_factor: e.psi_outer_factor,
                window_margin: e.psi_window_margin,
                ds: e.psi_ds,
                t_cap: e.psi_t_cap,
                transit_samples: e.transit_samples,
                seed: self.rng_seed,
            },
            damping_alpha_fraction: e.damping_alpha_fraction,
            c_floor: e.c_floor,
            bscale_samples: e.bscale_samples,
            cover_validation_samples: e.cover_validation_samples,
            seed: self.rng_seed,
        }
    }

    pub fn sample_spec(&self) -> SampleSpec {
        let e = &self.escape;
        SampleSpec {
            points: e.sample_points,
            radius_factor: e.radius_factor,
            xi_span: e.xi_span,
            quantile: e.quantile,
            seed: self.rng_seed,
        }
    }

    pub fn tune_grid(&self) -> TuneGrid {
        let e = &self.escape;
        TuneGrid {
            lambdas: e.lambdas.clone(),
            sigmas: e.sigmas.clone(),
            gammas: e.gammas.clone(),
            epsilon_start: e.epsilon_start,
            epsilon_min: e.epsilon_min,
            c_target: e.c_target,
        }
    }

    /// Grid for a given model, with dt shrunk so `times` fall on steps.
    pub fn grid_for(&self, model: &MetricModel, times: &[f64]) -> GridSpec {
        use dampwave_core::Metric;
        let s = &self.solver;
        let (_, c_ell) = model.ellipticity_bounds();
        GridSpec::with_cfl(s.extent, s.n, s.cfl, c_ell, s.sponge_width, s.sponge_strength).aligned_to(times)
    }

    /// The LED cases, or the scenario itself when none are listed.
    pub fn led_cases(&self) -> Vec<LedCase> {
        if self.led.cases.is_empty() {
            vec![LedCase {
                label: "scenario".into(),
                metric: self.metric,
                damping: self.damping,
                expect: LedExpectation::None,
            }]
        } else {
            self.led.cases.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[metric]\nkind = \"minkowski\"\n";

    #[test]
    fn minimal_config_takes_defaults() {
        let c = Config::parse(MINIMAL).unwrap();
        assert_eq!(c.damping, DampingSpec::None);
        assert_eq!(c.flow.r, 16.0);
        assert_eq!(c.solver.n, 96);
        assert_eq!(c.led.t_list, vec![10.0, 20.0, 40.0, 80.0]);
    }

    #[test]
    fn unknown_keys_are_named() {
        for (text, key) in [
            ("bogus = 1\n[metric]\nkind = \"minkowski\"\n", "bogus"),
            ("[metric]\nkind = \"minkowski\"\n[flow]\nrr = 3.0\n", "rr"),
            ("[metric]\nkind = \"trapped_shell\"\namplitude = -0.5\ncenter = 5.0\nwidth = 1.0\nextra = 2\n", "extra"),
            ("[metric]\nkind = \"minkowski\"\n[solver.data]\nkind = \"zero\"\nwhat = 1\n", "what"),
        ] {
            let e = Config::parse(text).unwrap_err();
            assert_eq!(e.exit_code(), 2);
            assert!(e.to_string().contains(key), "{e}");
        }
    }

    #[test]
    fn out_of_range_values_rejected() {
        let bad = [
            "[metric]\nkind = \"trapped_shell\"\namplitude = -1.0\ncenter = 5.0\nwidth = 1.0\n",
            "[metric]\nkind = \"minkowski\"\n[solver]\ncfl = 0.5\n",
            "[metric]\nkind = \"trapped_shell\"\namplitude = -0.9\ncenter = 0.5\nwidth = 2.0\n",
            "[metric]\nkind = \"minkowski\"\n[led]\nt_list = [20.0, 10.0]\n",
            "[metric]\nkind = \"minkowski\"\n[damping]\nkind = \"shell\"\nradius = 1.0\nhalf_width = 1.0\namplitude = -1.0\n",
        ];
        for text in bad {
            assert_eq!(Config::parse(text).unwrap_err().exit_code(), 2, "{text}");
        }
    }

    #[test]
    fn shipped_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut n = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.extension().and_then(|e| e.to_str()) == Some("toml") {
                Config::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
                n += 1;
            }
        }
        assert!(n >= 4);
    }
}
