//! Validation and execution of single scenarios.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};
use thermolab::c64;
use thermolab::correlations::{self, clustering_check, growth_constant_bound, truncation_check, universal_locality_check, LatticeFamily};
use thermolab::diagnostics::{self, anderson_hamiltonian, disorder_averaged_ratio, eigenfunction_localization, eth_scan, initial_state_memory_bound, mbl_report, transport_moments};
use thermolab::dynamics::{self, dephase, infinite_time_avg_sq_deviation, log_grid, sampled_time_avg_sq_deviation, uniform_grid, Trajectory};
use thermolab::ensembles::{max_entropy_state, projector_constraints, thermalisation_pipeline, EnergyWindow};
use thermolab::equilibration::{self, equilibration_bound_observable, equilibration_bound_povm};
use thermolab::lattice::{informationally_complete, basis_state, bloch_state, embed_local_operator, neel_state, pauli, product_state, trace_distance, LocalHamiltonian, LocalOperator, Operator, SiteKind, State};
use thermolab::rng::stream_rng;
use thermolab::spectral::{diagonalize, SpectralDecomposition, DEFAULT_DEGENERACY_TOL};
use thermolab::typicality::{concentration_experiment, haar_equilibration_experiment, haar_state, ConcentrationTarget, Subspace};

use crate::config::*;
use crate::CliError;

/// Experiment kind, the result it is anchored to, and the library operation
/// it runs.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CatalogEntry {
    pub kind: &'static str,
    pub anchor: &'static str,
    pub operation: &'static str,
}

pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry { kind: "equilibration_observable", anchor: "Equilibration on average", operation: "equilibration::equilibration_bound_observable" },
    CatalogEntry { kind: "equilibration_povm", anchor: "Equilibration on average", operation: "equilibration::equilibration_bound_povm" },
    CatalogEntry { kind: "time_average_oracle", anchor: "Infinite-time average", operation: "dynamics::infinite_time_avg_sq_deviation" },
    CatalogEntry { kind: "max_entropy", anchor: "Maximum entropy principle", operation: "ensembles::max_entropy_state" },
    CatalogEntry { kind: "thermalisation", anchor: "Thermalisation on average", operation: "ensembles::thermalisation_pipeline" },
    CatalogEntry { kind: "truncation", anchor: "Truncation formula", operation: "correlations::truncation_check" },
    CatalogEntry { kind: "clustering", anchor: "Clustering of correlations at high temperature", operation: "correlations::clustering_check" },
    CatalogEntry { kind: "universal_locality", anchor: "Universal locality at high temperatures", operation: "correlations::universal_locality_check" },
    CatalogEntry { kind: "concentration", anchor: "Measure concentration for quantum state vectors", operation: "typicality::concentration_experiment" },
    CatalogEntry { kind: "haar_equilibration", anchor: "Equilibration under Haar random Hamiltonians", operation: "typicality::haar_equilibration_experiment" },
    CatalogEntry { kind: "memory_bound", anchor: "Distinguishability of de-phased states", operation: "diagnostics::initial_state_memory_bound" },
    CatalogEntry { kind: "eth", anchor: "Eigenstate thermalisation hypothesis (ETH)", operation: "diagnostics::eth_scan" },
    CatalogEntry { kind: "anderson", anchor: "Anderson localisation", operation: "diagnostics::transport_moments" },
    CatalogEntry { kind: "level_statistics", anchor: "Ratio of consecutive level spacings", operation: "diagnostics::disorder_averaged_ratio" },
    CatalogEntry { kind: "mbl", anchor: "Many-body localisation markers", operation: "diagnostics::mbl_report" },
];

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::EquilibrationObservable(_) => "equilibration_observable",
            Experiment::EquilibrationPovm(_) => "equilibration_povm",
            Experiment::TimeAverageOracle(_) => "time_average_oracle",
            Experiment::MaxEntropy(_) => "max_entropy",
            Experiment::Thermalisation(_) => "thermalisation",
            Experiment::Truncation(_) => "truncation",
            Experiment::Clustering(_) => "clustering",
            Experiment::UniversalLocality(_) => "universal_locality",
            Experiment::Concentration(_) => "concentration",
            Experiment::HaarEquilibration(_) => "haar_equilibration",
            Experiment::MemoryBound(_) => "memory_bound",
            Experiment::Eth(_) => "eth",
            Experiment::Anderson(_) => "anderson",
            Experiment::LevelStatistics(_) => "level_statistics",
            Experiment::Mbl(_) => "mbl",
        }
    }

    pub fn entry(&self) -> &'static CatalogEntry {
        let k = self.kind();
        CATALOG.iter().find(|e| e.kind == k).expect("every kind is catalogued")
    }

    fn needs_model(&self) -> bool {
        !matches!(self, Experiment::Concentration(_) | Experiment::Anderson(_) | Experiment::LevelStatistics(_) | Experiment::Mbl(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

/// One asserted inequality `value <= limit + slack` or
/// `value >= limit - slack`.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub limit: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Collects checks, applying the scenario's bound scale to upper bounds.
struct Checks {
    scale: f64,
    list: Vec<Check>,
}

impl Checks {
    fn at_most(&mut self, name: impl Into<String>, value: f64, bound: f64, slack: f64) {
        let limit = bound * self.scale;
        self.list.push(Check { name: name.into(), value, relation: Relation::AtMost, limit, slack, passed: value <= limit + slack });
    }

    fn at_least(&mut self, name: impl Into<String>, value: f64, limit: f64, slack: f64) {
        self.list.push(Check { name: name.into(), value, relation: Relation::AtLeast, limit, slack, passed: value >= limit - slack });
    }
}

/// A CSV artifact: file-name suffix and contents.
pub struct Table {
    pub suffix: &'static str,
    pub bytes: Vec<u8>,
}

pub struct Outcome {
    pub result: Value,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
}

/// A scenario whose parameters passed validation.
pub struct Prepared<'a> {
    pub scenario: &'a Scenario,
    pub seed: u64,
    model: Option<LocalHamiltonian>,
}

fn pre(e: impl std::fmt::Display) -> CliError {
    CliError::Precondition(e.to_string())
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Precondition(msg.into())
}

fn check_sites(sites: &[usize], n: usize, what: &str) -> Result<(), CliError> {
    if sites.is_empty() {
        return Err(bad(format!("{what}: empty site list")));
    }
    let mut s = sites.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() != sites.len() {
        return Err(bad(format!("{what}: repeated site in {sites:?}")));
    }
    if let Some(&x) = s.iter().find(|&&x| x >= n) {
        return Err(bad(format!("{what}: site {x} outside {n} sites")));
    }
    Ok(())
}

fn check_proper_region(sites: &[usize], n: usize, what: &str) -> Result<(), CliError> {
    check_sites(sites, n, what)?;
    if sites.len() >= n {
        return Err(bad(format!("{what}: region must leave a non-empty complement")));
    }
    Ok(())
}

fn check_positive(x: f64, what: &str) -> Result<(), CliError> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(bad(format!("{what} must be positive and finite, got {x}")));
    }
    Ok(())
}

fn check_state(s: &StateSpec, n: usize) -> Result<(), CliError> {
    match s {
        StateSpec::Basis { digits } => {
            if digits.len() != n || digits.iter().any(|&d| d > 1) {
                return Err(bad(format!("basis state needs {n} binary digits, got {digits:?}")));
            }
        }
        StateSpec::Product { angles } => {
            if angles.len() != n || angles.iter().flatten().any(|a| !a.is_finite()) {
                return Err(bad(format!("product state needs {n} finite angle pairs")));
            }
        }
        _ => {}
    }
    Ok(())
}

fn check_grid(g: &GridSpec, what: &str) -> Result<(), CliError> {
    let ok = g.points >= 1 && g.start.is_finite() && g.end.is_finite() && g.start >= 0.0 && g.end >= g.start;
    let log_ok = g.spacing == Spacing::Uniform || g.start > 0.0;
    if !ok || !log_ok || (g.points > 1 && g.end == g.start) {
        return Err(bad(format!("{what}: invalid grid {g:?}")));
    }
    Ok(())
}

fn grid(g: &GridSpec) -> Vec<f64> {
    match g.spacing {
        Spacing::Uniform => uniform_grid(g.start, g.end, g.points),
        Spacing::Log => log_grid(g.start, g.end, g.points),
    }
}

fn check_observable(o: &ObservableSpec, n: usize) -> Result<(), CliError> {
    check_sites(&o.sites, n, "observable")
}

/// Validates parameters against the operation's preconditions without
/// doing any numerical work.
pub fn prepare<'a>(scenario: &'a Scenario, base_dir: &Path, base_seed: u64) -> Result<Prepared<'a>, CliError> {
    let exp = &scenario.experiment;
    let ctx = |e: CliError| match e {
        CliError::Precondition(m) => CliError::Precondition(format!("scenario {}: {m}", scenario.name)),
        other => other,
    };
    let model = match (&scenario.model, exp.needs_model()) {
        (Some(m), true) => {
            let spec = resolve_model(m, base_dir).map_err(ctx)?;
            if spec.kind != SiteKind::Spin {
                return Err(ctx(bad("only spin models are supported by the runner")));
            }
            Some(spec.build().map_err(pre).map_err(ctx)?)
        }
        (None, true) => return Err(ctx(bad(format!("{} needs a model", exp.kind())))),
        (Some(_), false) => return Err(ctx(bad(format!("{} takes no model", exp.kind())))),
        (None, false) => None,
    };
    if !(scenario.bound_scale >= 0.0 && scenario.bound_scale.is_finite()) {
        return Err(ctx(bad(format!("bound_scale {}", scenario.bound_scale))));
    }
    let n = model.as_ref().map_or(0, |h| h.graph().n_sites());
    validate(exp, n).map_err(ctx)?;
    Ok(Prepared { scenario, seed: scenario.seed.unwrap_or(base_seed), model })
}

fn validate(exp: &Experiment, n: usize) -> Result<(), CliError> {
    match exp {
        Experiment::EquilibrationObservable(p) => {
            check_observable(&p.observable, n)?;
            check_state(&p.state, n)?;
            check_positive(p.t_final, "t_final")?;
            if let Some(e) = p.epsilon {
                check_positive(e, "epsilon")?;
            }
        }
        Experiment::EquilibrationPovm(p) => {
            check_sites(&p.sites, n, "measured sites")?;
            check_state(&p.state, n)?;
            check_positive(p.t_final, "t_final")?;
            if let Some(e) = p.epsilon {
                check_positive(e, "epsilon")?;
            }
        }
        Experiment::TimeAverageOracle(p) => {
            check_observable(&p.observable, n)?;
            check_state(&p.state, n)?;
            check_positive(p.gap_multiple, "gap_multiple")?;
            check_positive(p.relative_tolerance, "relative_tolerance")?;
            if p.samples == 0 {
                return Err(bad("samples must be positive"));
            }
        }
        Experiment::MaxEntropy(p) => {
            check_state(&p.state, n)?;
            check_positive(p.tolerance, "tolerance")?;
        }
        Experiment::Thermalisation(p) => {
            check_proper_region(&p.region, n, "region")?;
            if !(0.0..=1.0).contains(&p.window_centre) {
                return Err(bad(format!("window_centre {} outside [0, 1]", p.window_centre)));
            }
            check_positive(p.window_width, "window_width")?;
            check_grid(&p.times, "times")?;
            check_positive(p.max_distance, "max_distance")?;
            check_positive(p.coupling_limit, "coupling_limit")?;
        }
        Experiment::Truncation(p) => {
            check_sites(&p.region, n, "region")?;
            check_observable(&p.observable, n)?;
            if p.observable.sites.iter().any(|s| !p.region.contains(s)) {
                return Err(bad("observable support must lie inside the region"));
            }
            if !p.beta.is_finite() || p.quad_points == 0 {
                return Err(bad("beta must be finite and quad_points positive"));
            }
            check_positive(p.tolerance, "tolerance")?;
        }
        Experiment::Clustering(p) => {
            if !p.beta.is_finite() || !(0.0..=1.0).contains(&p.tau) {
                return Err(bad(format!("beta {} / tau {}", p.beta, p.tau)));
            }
            if p.pairs.is_empty() {
                return Err(bad("no observable pairs"));
            }
            for pair in &p.pairs {
                check_sites(&pair[..1], n, "pair")?;
                check_sites(&pair[1..], n, "pair")?;
            }
        }
        Experiment::UniversalLocality(p) => {
            if !p.beta.is_finite() {
                return Err(bad("beta must be finite"));
            }
            check_sites(&p.b_region, n, "b_region")?;
            check_sites(&p.s_region, n, "s_region")?;
            if p.s_region.iter().any(|s| !p.b_region.contains(s)) {
                return Err(bad("s_region must lie inside b_region"));
            }
        }
        Experiment::Concentration(p) => {
            if p.n_qubits == 0 || p.n_qubits > 14 {
                return Err(bad(format!("n_qubits {} outside 1..=14", p.n_qubits)));
            }
            check_observable(&p.observable, p.n_qubits)?;
            check_positive(p.epsilon, "epsilon")?;
            if p.samples == 0 {
                return Err(bad("samples must be positive"));
            }
        }
        Experiment::HaarEquilibration(p) => {
            check_state(&p.state, n)?;
            check_proper_region(&p.region, n, "region")?;
            check_grid(&p.times, "times")?;
            check_positive(p.epsilon, "epsilon")?;
            if p.samples == 0 {
                return Err(bad("samples must be positive"));
            }
        }
        Experiment::MemoryBound(p) => {
            check_proper_region(&p.region, n, "region")?;
            for pair in &p.pairs {
                for s in pair {
                    check_state(s, n)?;
                }
            }
            if p.random_pairs == 0 && p.pairs.is_empty() {
                return Err(bad("no state pairs"));
            }
        }
        Experiment::Eth(p) => {
            check_observable(&p.observable, n)?;
            check_positive(p.window_width, "window_width")?;
        }
        Experiment::Anderson(p) => {
            if p.length < 2 || p.start >= p.length {
                return Err(bad(format!("length {} / start {}", p.length, p.start)));
            }
            if !p.lambda.is_finite() || !(p.disorder_width >= 0.0) || p.realizations == 0 {
                return Err(bad("lambda finite, disorder_width >= 0 and realizations >= 1 required"));
            }
            check_positive(p.moment, "moment")?;
            check_grid(&p.times, "times")?;
        }
        Experiment::LevelStatistics(p) => {
            if p.n < 4 || p.n % 2 != 0 || p.n > 16 {
                return Err(bad(format!("chain length {} must be even in 4..=16", p.n)));
            }
            if p.realizations == 0 || !(p.disorder >= 0.0) {
                return Err(bad("realizations >= 1 and disorder >= 0 required"));
            }
            check_positive(p.tolerance, "tolerance")?;
        }
        Experiment::Mbl(p) => {
            if p.n < 4 || p.n % 2 != 0 || p.n > 16 {
                return Err(bad(format!("chain length {} must be even in 4..=16", p.n)));
            }
            if p.realizations < 20 {
                return Err(bad(format!("{} realizations; at least 20 needed", p.realizations)));
            }
            if p.disorder.is_empty() || p.disorder.iter().any(|w| !(*w >= 0.0)) {
                return Err(bad("disorder list must be non-empty and non-negative"));
            }
            if let Some(g) = &p.times {
                check_grid(g, "times")?;
                if g.start <= 0.0 {
                    return Err(bad("entanglement times must start above zero"));
                }
            }
        }
    }
    Ok(())
}

fn pauli_matrix(p: PauliName) -> Operator {
    match p {
        PauliName::X => pauli::x(),
        PauliName::Y => pauli::y(),
        PauliName::Z => pauli::z(),
    }
}

fn local_observable(o: &ObservableSpec) -> LocalOperator {
    let single = pauli_matrix(o.pauli);
    let op = o.sites.iter().skip(1).fold(single.clone(), |acc, _| acc.kron(&single));
    LocalOperator::new(o.sites.clone(), op)
}

fn observable(o: &ObservableSpec, n: usize) -> Result<Operator, CliError> {
    let l = local_observable(o);
    embed_local_operator(&vec![2; n], SiteKind::Spin, &l.sites, &l.op).map_err(pre)
}

/// Uniform point on the Bloch sphere.
fn random_qubit<R: Rng>(rng: &mut R) -> Vec<c64> {
    let theta = (1.0 - 2.0 * rng.random::<f64>()).acos();
    bloch_state(theta, 2.0 * PI * rng.random::<f64>())
}

fn build_state<R: Rng>(s: &StateSpec, n: usize, rng: &mut R) -> Vec<c64> {
    match s {
        StateSpec::Neel { first_up } => neel_state(n, *first_up),
        StateSpec::Basis { digits } => basis_state(&vec![2; n], digits),
        StateSpec::Product { angles } => product_state(&angles.iter().map(|a| bloch_state(a[0], a[1])).collect::<Vec<_>>()),
        StateSpec::RandomProduct => product_state(&(0..n).map(|_| random_qubit(rng)).collect::<Vec<_>>()),
        StateSpec::Haar => haar_state(&Subspace::Full(1 << n), rng),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report structs serialise")
}

fn full_spectrum(h: &LocalHamiltonian) -> Result<SpectralDecomposition, CliError> {
    diagonalize(&h.assemble().map_err(pre)?, DEFAULT_DEGENERACY_TOL).map_err(pre)
}

fn growth_constant(h: &LocalHamiltonian, declared: Option<f64>) -> Result<f64, CliError> {
    let family = match declared {
        Some(a) => LatticeFamily::Declared(a),
        None => LatticeFamily::detect(h.graph()).map_err(pre)?,
    };
    growth_constant_bound(family).map_err(pre)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    buf
}

impl Prepared<'_> {
    fn model(&self) -> &LocalHamiltonian {
        self.model.as_ref().expect("validated: model present")
    }

    fn n(&self) -> usize {
        self.model().graph().n_sites()
    }

    /// Runs the experiment. Library errors surface as precondition failures.
    pub fn execute(&self) -> Result<Outcome, CliError> {
        let mut checks = Checks { scale: self.scenario.bound_scale, list: Vec::new() };
        let mut tables = Vec::new();
        let mut rng = stream_rng(self.seed, 0);
        let result = match &self.scenario.experiment {
            Experiment::EquilibrationObservable(p) => {
                let spec = full_spectrum(self.model())?;
                let a = observable(&p.observable, self.n())?;
                let psi = build_state(&p.state, self.n(), &mut rng);
                let r = equilibration_bound_observable(&a, &State::Pure(psi), &spec, p.epsilon, p.t_final).map_err(pre)?;
                checks.at_most("time-averaged squared deviation", r.lhs, r.rhs, equilibration::BOUND_SLACK);
                to_value(&r)
            }
            Experiment::EquilibrationPovm(p) => {
                let spec = full_spectrum(self.model())?;
                let m = informationally_complete(&p.sites);
                let psi = build_state(&p.state, self.n(), &mut rng);
                let dims = vec![2; self.n()];
                let r = equilibration_bound_povm(&m, &State::Pure(psi), &spec, &dims, p.epsilon, p.t_final).map_err(pre)?;
                checks.at_most("time-averaged restricted distinguishability", r.lhs, r.rhs, equilibration::BOUND_SLACK);
                to_value(&r)
            }
            Experiment::TimeAverageOracle(p) => {
                let spec = full_spectrum(self.model())?;
                let lv = spec.levels();
                if lv.len() < 2 {
                    return Err(bad("a single energy level has no gaps"));
                }
                let min_gap = lv.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
                let t_final = p.gap_multiple / min_gap;
                let a = observable(&p.observable, self.n())?;
                let state = State::Pure(build_state(&p.state, self.n(), &mut rng));
                let exact = infinite_time_avg_sq_deviation(&a, &state, &spec).map_err(pre)?;
                let sampled = sampled_time_avg_sq_deviation(&a, &state, &spec, t_final, p.samples, self.seed).map_err(pre)?;
                checks.at_most("sampled vs exact time average", (sampled - exact).abs(), p.relative_tolerance * exact, 0.0);
                json!({ "exact": exact, "sampled": sampled, "t_final": t_final, "min_gap": min_gap, "samples": p.samples })
            }
            Experiment::MaxEntropy(p) => {
                let spec = full_spectrum(self.model())?;
                let state = State::Pure(build_state(&p.state, self.n(), &mut rng));
                let constraints = projector_constraints(&spec, &state).map_err(pre)?;
                let me = max_entropy_state(&spec, &constraints).map_err(pre)?;
                let omega = dephase(&state, &spec).map_err(pre)?;
                let distance = trace_distance(&me.state, &omega).map_err(pre)?;
                checks.at_most("D(max-entropy state, dephased state)", distance, p.tolerance, 0.0);
                json!({
                    "distance": distance,
                    "entropy_bits": me.entropy,
                    "iterations": me.iterations,
                    "residual": me.residual,
                    "n_levels": spec.n_levels(),
                    "nondegenerate": spec.is_nondegenerate(),
                })
            }
            Experiment::Thermalisation(p) => {
                let h = self.model();
                let e = h.assemble().map_err(pre)?.eigvalsh().map_err(pre)?;
                let (lo, hi) = (e[0], e[e.len() - 1]);
                let window = EnergyWindow::centred(lo + p.window_centre * (hi - lo), p.window_width * (hi - lo)).map_err(pre)?;
                let coherence = p.random_coherences.then_some(self.seed);
                let r = thermalisation_pipeline(h, &p.region, &window, coherence, &grid(&p.times)).map_err(pre)?;
                if r.coupling_ratio <= p.coupling_limit {
                    checks.at_most("time-averaged D(rho_S(t), thermal)", r.time_averaged_distance, p.max_distance, 0.0);
                }
                json!({ "window": { "lo": window.lo, "hi": window.hi }, "report": to_value(&r) })
            }
            Experiment::Truncation(p) => {
                let r = truncation_check(self.model(), &p.region, &local_observable(&p.observable), p.beta, p.quad_points).map_err(pre)?;
                checks.at_most("|lhs - rhs|", r.residual, p.tolerance, 0.0);
                to_value(&r)
            }
            Experiment::Clustering(p) => {
                let h = self.model();
                let spec = full_spectrum(h)?;
                let single = pauli_matrix(p.pauli);
                let pairs: Vec<(LocalOperator, LocalOperator)> = p
                    .pairs
                    .iter()
                    .map(|[x, y]| (LocalOperator::new(vec![*x], single.clone()), LocalOperator::new(vec![*y], single.clone())))
                    .collect();
                let alpha = growth_constant(h, p.alpha)?;
                let r = clustering_check(h, &spec, p.beta, p.tau, &pairs, alpha).map_err(pre)?;
                for (row, [x, y]) in r.rows.iter().zip(&p.pairs) {
                    if row.qualifies {
                        checks.at_most(format!("|cov({x},{y})|"), row.covariance.abs(), row.bound, correlations::BOUND_SLACK);
                    }
                }
                tables.push(Table { suffix: "pairs", bytes: csv_bytes(|b| correlations::write_pair_sweep_csv(b, &r)) });
                to_value(&r)
            }
            Experiment::UniversalLocality(p) => {
                let h = self.model();
                let spec = full_spectrum(h)?;
                let alpha = growth_constant(h, p.alpha)?;
                let r = universal_locality_check(h, &spec, p.beta, &p.s_region, &p.b_region, alpha).map_err(pre)?;
                if r.qualifies {
                    checks.at_most("D(g_S[H], g_S[H_B])", r.lhs, r.rhs, correlations::BOUND_SLACK);
                }
                to_value(&r)
            }
            Experiment::Concentration(p) => {
                let a = observable(&p.observable, p.n_qubits)?;
                let r = concentration_experiment(&ConcentrationTarget::Observable(a), &Subspace::Full(1 << p.n_qubits), p.samples, p.epsilon, self.seed)
                    .map_err(pre)?;
                checks.at_most("exceedance frequency", r.frequency, r.bound, 3.0 * r.sigma);
                let mut v = to_value(&r);
                if let Some(o) = v.as_object_mut() {
                    o.remove("deviations");
                }
                v
            }
            Experiment::HaarEquilibration(p) => {
                let g = self.model().assemble().map_err(pre)?;
                let state = State::Pure(build_state(&p.state, self.n(), &mut rng));
                let times = grid(&p.times);
                let r = haar_equilibration_experiment(&g, &state, self.n(), &p.region, &times, p.samples, p.epsilon, self.seed, p.circuit_depth).map_err(pre)?;
                if r.asserted {
                    for (t, f) in r.times.iter().zip(&r.frequencies) {
                        checks.at_most(format!("exceedance frequency at t={t:.6e}"), *f, p.epsilon, 0.0);
                    }
                }
                to_value(&r)
            }
            Experiment::MemoryBound(p) => {
                let spec = full_spectrum(self.model())?;
                let n = self.n();
                let dims = vec![2; n];
                let mut states: Vec<(Vec<c64>, Vec<c64>, bool)> = Vec::new();
                let bath: Vec<Vec<c64>> = (0..n).map(|_| random_qubit(&mut rng)).collect();
                for _ in 0..p.random_pairs {
                    let mut pair = Vec::with_capacity(2);
                    for _ in 0..2 {
                        let factors: Vec<Vec<c64>> = (0..n).map(|s| if p.region.contains(&s) { random_qubit(&mut rng) } else { bath[s].clone() }).collect();
                        pair.push(product_state(&factors));
                    }
                    let b = pair.pop().expect("two states");
                    let a = pair.pop().expect("two states");
                    states.push((a, b, false));
                }
                for [a, b] in &p.pairs {
                    states.push((build_state(a, n, &mut rng), build_state(b, n, &mut rng), true));
                }
                let mut reports = Vec::with_capacity(states.len());
                for (i, (a, b, explicit)) in states.iter().enumerate() {
                    let r = initial_state_memory_bound(a, b, &spec, &dims, &p.region).map_err(pre)?;
                    checks.at_least(format!("pair {i}: D(omega_1, omega_2) against bound"), r.lhs, r.rhs, diagnostics::MEMORY_BOUND_SLACK);
                    if let (true, Some(m)) = (explicit, p.min_lhs) {
                        checks.at_least(format!("pair {i}: D(omega_1, omega_2)"), r.lhs, m, 0.0);
                    }
                    reports.push(r);
                }
                json!({ "pairs": to_value(&reports) })
            }
            Experiment::Eth(p) => {
                let spec = full_spectrum(self.model())?;
                let a = observable(&p.observable, self.n())?;
                let s = eth_scan(&a, &spec, p.window_width).map_err(pre)?;
                tables.push(Table {
                    suffix: "windows",
                    bytes: csv_bytes(|b| {
                        use std::io::Write;
                        writeln!(b, "# window_width: {:.16e}", p.window_width)?;
                        writeln!(b, "lo,hi,count,mean,variance,spread,thermal_value")?;
                        for w in &s.windows {
                            let tv = w.thermal_value.map_or(String::new(), |v| format!("{v:.16e}"));
                            writeln!(b, "{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{}", w.lo, w.hi, w.count, w.mean, w.variance, w.spread, tv)?;
                        }
                        Ok(())
                    }),
                });
                tables.push(Table {
                    suffix: "diagonal",
                    bytes: csv_bytes(|b| {
                        use std::io::Write;
                        writeln!(b, "# eigenstate expectation values")?;
                        writeln!(b, "energy,diagonal")?;
                        for (e, d) in s.energies.iter().zip(&s.diagonal) {
                            writeln!(b, "{e:.16e},{d:.16e}")?;
                        }
                        Ok(())
                    }),
                });
                json!({
                    "windows": to_value(&s.windows),
                    "max_window_spread": s.max_window_spread,
                    "mid_spectrum_spread": s.mid_spectrum_spread(),
                    "max_level_spread": s.level_spread.iter().cloned().fold(0.0, f64::max),
                    "mean_off_diagonal": s.off_diagonal.iter().sum::<f64>() / s.off_diagonal.len().max(1) as f64,
                })
            }
            Experiment::Anderson(p) => {
                let times = grid(&p.times);
                let mut mean = vec![0.0; times.len()];
                let mut iprs = Vec::with_capacity(p.realizations);
                let mut lengths = Vec::new();
                for r in 0..p.realizations {
                    let h = anderson_hamiltonian(p.length, p.lambda, p.disorder_width, &mut stream_rng(self.seed, r as u64)).map_err(pre)?;
                    let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).map_err(pre)?;
                    let loc = eigenfunction_localization(&spec);
                    iprs.push(loc.median_ipr);
                    lengths.extend(loc.decay_length.iter().flatten());
                    let tr = transport_moments(p.start, &spec, &times, p.moment).map_err(pre)?;
                    for (m, v) in mean.iter_mut().zip(&tr.moments.values) {
                        *m += v / p.realizations as f64;
                    }
                }
                let traj = Trajectory::new(times, mean).map_err(pre)?;
                let supremum = traj.values.iter().cloned().fold(0.0, f64::max);
                let meta = [("length", p.length.to_string()), ("moment", format!("{:.16e}", p.moment)), ("realizations", p.realizations.to_string())];
                let meta: Vec<(&str, String)> = meta.iter().map(|(k, v)| (*k, v.clone())).collect();
                tables.push(Table { suffix: "moments", bytes: csv_bytes(|b| dynamics::write_trajectory_csv(b, &traj, "moment", &meta)) });
                json!({
                    "median_ipr": median(&iprs),
                    "median_decay_length": median(&lengths),
                    "moment_supremum": supremum,
                    "clean_ipr_reference": 1.5 / (p.length as f64 + 1.0),
                })
            }
            Experiment::LevelStatistics(p) => {
                let (mean_r, stderr) = disorder_averaged_ratio(p.n, p.disorder, p.boundary, p.realizations, self.seed, 0).map_err(pre)?;
                if let Some(x) = p.expected {
                    checks.at_most("|mean r - expected|", (mean_r - x).abs(), p.tolerance, 0.0);
                }
                json!({ "mean_r": mean_r, "stderr": stderr, "r_goe": diagnostics::R_GOE, "r_poisson": diagnostics::R_POISSON })
            }
            Experiment::Mbl(p) => {
                let params = diagnostics::MblParams {
                    n: p.n,
                    disorder: p.disorder.clone(),
                    realizations: p.realizations,
                    seed: self.seed,
                    times: p.times.as_ref().map(grid).unwrap_or_default(),
                    boundary: p.boundary,
                };
                let r = mbl_report(&params).map_err(pre)?;
                tables.push(Table { suffix: "table", bytes: csv_bytes(|b| diagnostics::write_mbl_csv(b, &r)) });
                to_value(&r)
            }
        };
        Ok(Outcome { result, checks: checks.list, tables })
    }
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}
