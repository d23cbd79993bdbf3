//! Executable verification suite: each check exercises one documented
//! property of the pipeline end to end and yields a pass/fail line with the
//! measured numbers. `verify` in the CLI and the integration tests both run
//! [`run_all`].

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, LN_2, PI};
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{product_trajectory, propagate_mean_field};
use crate::models::{coherent_vector, default_coherent_levels, Dissipator, InitialFactor, JumpId, Label};
use crate::numerics::derivative;
use crate::operators::{Operator, QuantumState};
use crate::scenarios::{preset_catalog, preset_config, run_scenario, scenario_trajectory, time_unit, ScenarioConfig};
use crate::thermo::{
    analyze, entropy_heat_rate_residual, exergy, mca_rates, SubsystemLedger, ThermoTable,
    SENTINEL_HEAT_TOL,
};
use crate::{Error, Result, C64};

/// Result of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    /// Measured numbers behind the verdict.
    pub details: String,
    pub seconds: f64,
}

/// Entropy floor below which a qubit's effective inverse temperature sits on
/// the noise-amplified shoulder of the log (smallest population under about
/// 1e-5), where cross-run comparison of beta is not meaningful.
const BETA_COMPARE_ENTROPY_FLOOR: f64 = 1.3e-4;

fn fe(x: f64) -> String {
    format!("{x:.1e}")
}

/// Equality with matching infinities.
fn close(a: f64, b: f64, tol: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= tol
}

fn scaled_times(t: &ThermoTable) -> Vec<f64> {
    t.times
        .iter()
        .map(|&x| x * t.provenance.time_scale)
        .collect()
}

fn a_col(t: &ThermoTable, f: impl Fn(&SubsystemLedger) -> f64) -> Vec<f64> {
    t.records.iter().map(|r| f(&r.a)).collect()
}

fn b_col(t: &ThermoTable, f: impl Fn(&SubsystemLedger) -> f64) -> Result<Vec<f64>> {
    t.records
        .iter()
        .map(|r| {
            r.b.as_ref()
                .map(&f)
                .ok_or_else(|| Error::BadSpec("table has no second subsystem".into()))
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, &x| m.max(x.abs()))
}

/// Index of the sample nearest the dimensionless time `x`.
fn index_at(xs: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut err = f64::INFINITY;
    for (i, &t) in xs.iter().enumerate() {
        let d = (t - x).abs();
        if d < err {
            err = d;
            best = i;
        }
    }
    best
}

fn preset_with(name: &str, tweak: impl FnOnce(&mut ScenarioConfig)) -> Result<ScenarioConfig> {
    let mut cfg = preset_config(name)?;
    tweak(&mut cfg);
    Ok(cfg)
}

struct Shared {
    jc2000: ThermoTable,
    jc2000_s: f64,
    qq2000: ThermoTable,
    qq2000_s: f64,
    se2000: ThermoTable,
    se2000_s: f64,
    coherent30: ThermoTable,
    coherent30_s: f64,
}

fn timed_table(cfg: &ScenarioConfig) -> Result<(ThermoTable, f64)> {
    let t0 = Instant::now();
    let table = run_scenario(cfg)?;
    Ok((table, t0.elapsed().as_secs_f64()))
}

impl Shared {
    fn build() -> Result<Shared> {
        let (jc2000, jc2000_s) = timed_table(&preset_with("jc-excited-vacuum", |c| c.samples = 2000)?)?;
        let (qq2000, qq2000_s) = timed_table(&preset_with("qq-excited-ground", |c| c.samples = 2000)?)?;
        let (se2000, se2000_s) = timed_table(&preset_with("se-lindblad", |c| c.samples = 2000)?)?;
        let (coherent30, coherent30_s) = timed_table(&preset_config("jc-coherent-drive")?)?;
        Ok(Shared {
            jc2000,
            jc2000_s,
            qq2000,
            qq2000_s,
            se2000,
            se2000_s,
            coherent30,
            coherent30_s,
        })
    }
}

fn run_criterion(
    id: usize,
    title: &'static str,
    f: impl FnOnce() -> Result<(bool, String)>,
) -> CriterionOutcome {
    let t0 = Instant::now();
    let (passed, details) = match f() {
        Ok(x) => x,
        Err(e) => (false, format!("execution error: {e}")),
    };
    CriterionOutcome {
        id,
        title,
        passed,
        details,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

/// Run the full acceptance suite. An `Err` means the shared preset runs
/// themselves could not be produced; individual check failures are reported
/// through the outcomes.
pub fn run_all() -> Result<Vec<CriterionOutcome>> {
    let shared = Shared::build()?;
    Ok(vec![
        run_criterion(1, "exchange work and heat checkpoints", || criterion_1(&shared)),
        run_criterion(2, "passive work uptake of the vacuum mode", || criterion_2(&shared)),
        run_criterion(3, "spontaneous emission closed forms", || criterion_3(&shared)),
        run_criterion(4, "second law on every preset", criterion_4),
        run_criterion(5, "entropy-rate identity second-order convergence", criterion_5),
        run_criterion(6, "exergy decomposition on random states", criterion_6),
        run_criterion(7, "semiclassical regime comparators", || criterion_7(&shared)),
        run_criterion(8, "qubit-qubit matches qubit-oscillator emitter", || criterion_8(&shared)),
        run_criterion(9, "superposition scenarios agree, extraction steady", criterion_9),
        run_criterion(10, "full-period symmetry and closure", criterion_10),
        run_criterion(11, "damped-mode coupling regimes", || criterion_11(&shared)),
    ])
}

pub fn all_passed(outcomes: &[CriterionOutcome]) -> bool {
    outcomes.iter().all(|o| o.passed)
}

/// One line per criterion plus a summary line.
pub fn format_report(outcomes: &[CriterionOutcome]) -> String {
    let mut s = String::new();
    for o in outcomes {
        let verdict = if o.passed { "pass" } else { "FAIL" };
        let _ = writeln!(
            s,
            "criterion {:>2}  {}  {:<46} [{:.2} s]  {}",
            o.id, verdict, o.title, o.seconds, o.details
        );
    }
    let n_pass = outcomes.iter().filter(|o| o.passed).count();
    let _ = writeln!(s, "{n_pass}/{} criteria passed", outcomes.len());
    s
}

/// Excited qubit into a vacuum mode: work plateau of one quantum, heat of
/// half a quantum at the quarter period, infinite-temperature midpoint.
fn criterion_1(shared: &Shared) -> Result<(bool, String)> {
    let t = &shared.jc2000;
    let gts = scaled_times(t);
    let w = a_col(t, |a| a.work);
    let q = a_col(t, |a| a.heat);
    let s = a_col(t, |a| a.entropy);
    let beta = a_col(t, |a| a.beta);
    let iq = index_at(&gts, FRAC_PI_4);
    let e_w = (w[iq] - 1.0).abs();
    let plateau = w[iq..].iter().fold(0.0f64, |m, &x| m.max((x - w[iq]).abs()));
    let e_q = (q[iq] + 0.5).abs();
    let e_q_end = q[q.len() - 1].abs();
    let e_s = (s[iq] - LN_2).abs();
    let e_beta = beta[iq].abs();
    let ok = e_w <= 1e-6
        && plateau <= 1e-6
        && e_q <= 1e-6
        && e_q_end <= 1e-6
        && e_s <= 1e-9
        && e_beta <= 1e-6
        && shared.jc2000_s < 5.0;
    let details = format!(
        "|W_A(pi/4)-1|={}, plateau spread={}, |Q_A(pi/4)+1/2|={}, |Q_A(pi/2)|={}, |S_A(pi/4)-ln2|={}, |beta_A(pi/4)|={}, run {:.2} s",
        fe(e_w), fe(plateau), fe(e_q), fe(e_q_end), fe(e_s), fe(e_beta), shared.jc2000_s
    );
    Ok((ok, details))
}

/// The vacuum mode takes in work while its state stays passive: negative
/// W_B with identically zero ergotropy over the first quarter period.
fn criterion_2(shared: &Shared) -> Result<(bool, String)> {
    let t = &shared.jc2000;
    let gts = scaled_times(t);
    let w_b = b_col(t, |b| b.work)?;
    let ergo_b = b_col(t, |b| b.ergotropy)?;
    let mut worst_w = f64::NEG_INFINITY;
    let mut max_ergo = 0.0f64;
    let mut n_window = 0usize;
    for i in 0..gts.len() {
        if gts[i] > 0.0 && gts[i] <= FRAC_PI_4 + 1e-12 {
            max_ergo = max_ergo.max(ergo_b[i].abs());
            if gts[i] > 0.05 {
                worst_w = worst_w.max(w_b[i]);
                n_window += 1;
            }
        }
    }
    let ok = n_window > 0 && worst_w < -1e-6 && max_ergo <= 1e-12;
    let details = format!(
        "max W_B on (0.05, pi/4] = {} (< -1e-6 over {} samples), max |ergotropy_B| on (0, pi/4] = {}",
        fe(worst_w), n_window, fe(max_ergo)
    );
    Ok((ok, details))
}

/// Spontaneous emission against the closed forms: exponential decay of the
/// excited population, the piecewise heat/work laws, and the standard-frame
/// heat equal to the energy change.
fn criterion_3(shared: &Shared) -> Result<(bool, String)> {
    let t = &shared.se2000;
    let xs = scaled_times(t); // Gamma * t
    let u = a_col(t, |a| a.internal_energy);
    let q = a_col(t, |a| a.heat);
    let w = a_col(t, |a| a.work);
    let q_st: Vec<f64> = t.records.iter().map(|r| r.comparator_a.standard_heat).collect();
    let pe: Vec<f64> = u.iter().map(|&x| x + 0.5).collect();
    let mut e_decay = 0.0f64;
    let mut e_early = 0.0f64;
    let mut e_late_w = 0.0f64;
    let mut e_qst = 0.0f64;
    for i in 0..xs.len() {
        e_decay = e_decay.max((pe[i] - (-xs[i]).exp()).abs());
        e_qst = e_qst.max((q_st[i] - (pe[i] - 1.0)).abs());
        if pe[i] >= 0.5 {
            e_early = e_early.max((q[i] + (1.0 - pe[i])).abs());
            e_early = e_early.max((w[i] - 2.0 * (1.0 - pe[i])).abs());
        }
        if xs[i] > LN_2 {
            e_late_w = e_late_w.max((w[i] - 1.0).abs());
        }
    }
    let ok = e_decay < 1e-6
        && e_early <= 1e-5
        && e_late_w <= 1e-5
        && e_qst <= 1e-5
        && shared.se2000_s < 10.0;
    let details = format!(
        "max|P_e - exp(-Gt)|={}, early |Q+w(1-P_e)| and |W-2(1-P_e)| max={}, late |W-1|={}, |Q_st-(P_e-1)|={}, run {:.2} s",
        fe(e_decay), fe(e_early), fe(e_late_w), fe(e_qst), shared.se2000_s
    );
    Ok((ok, details))
}

/// Entropy production through both of its expressions on one table side:
/// the ledger stores the information form; the balance form is rebuilt from
/// the columns with the infinite-initial-temperature sentinel.
fn production_forms(
    t: &ThermoTable,
    side: Label,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let bipartite = t.records.first().map(|r| r.b.is_some()).unwrap_or(false);
    if !bipartite {
        let sigma = a_col(t, |a| a.sigma);
        return Ok((sigma.clone(), sigma));
    }
    let (own, other): (Vec<&SubsystemLedger>, Vec<&SubsystemLedger>) = match side {
        Label::A => (
            t.records.iter().map(|r| &r.a).collect(),
            t.records.iter().map(|r| r.b.as_ref().unwrap()).collect(),
        ),
        Label::B => (
            t.records.iter().map(|r| r.b.as_ref().unwrap()).collect(),
            t.records.iter().map(|r| &r.a).collect(),
        ),
    };
    let beta0 = other[0].beta;
    let s0 = own[0].entropy;
    let lhs: Vec<f64> = own
        .iter()
        .zip(&other)
        .map(|(o, p)| {
            let ds = o.entropy - s0;
            if beta0.is_finite() {
                ds - beta0 * p.heat
            } else if p.heat.abs() <= SENTINEL_HEAT_TOL {
                ds
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let rhs: Vec<f64> = match side {
        Label::A => a_col(t, |a| a.sigma),
        Label::B => b_col(t, |b| b.sigma)?,
    };
    Ok((lhs, rhs))
}

/// Both entropy-production forms stay non-negative on every preset and
/// agree where both are finite; rows whose balance form carries the
/// infinite-initial-temperature sentinel are counted as skipped.
fn criterion_4() -> Result<(bool, String)> {
    let mut min_value = f64::INFINITY;
    let mut max_gap = 0.0f64;
    let mut argmax = String::new();
    let mut compared = 0usize;
    let mut skipped = 0usize;
    let mut open_rows = 0usize;
    let mut open_gap = 0.0f64;
    let mut saw_nan = false;
    let mut per_preset: Vec<String> = Vec::new();
    for (name, _) in preset_catalog() {
        let table = run_scenario(&preset_config(name)?)?;
        let bipartite = table.records[0].b.is_some();
        // The balance and information forms are equal as a theorem only for
        // closed pair evolution; under damping their finite rows differ by
        // the bath's entropy share, so those are reported, not compared.
        let closed = table.provenance.model.dissipator.is_none();
        let sides: &[Label] = if bipartite { &[Label::A, Label::B] } else { &[Label::A] };
        let mut local_compared = 0usize;
        for &side in sides {
            let (lhs, rhs) = production_forms(&table, side)?;
            for (i, (l, r)) in lhs.iter().zip(&rhs).enumerate() {
                for v in [l, r] {
                    if v.is_nan() {
                        saw_nan = true;
                    } else if v.is_finite() {
                        min_value = min_value.min(*v);
                    }
                }
                if !(l.is_finite() && r.is_finite()) {
                    skipped += 1;
                } else if bipartite && !closed {
                    open_gap = open_gap.max((l - r).abs());
                    open_rows += 1;
                } else {
                    let gap = (l - r).abs();
                    if gap > max_gap {
                        max_gap = gap;
                        argmax = format!("{name} side {side:?} sample {i}");
                    }
                    compared += 1;
                    local_compared += 1;
                }
            }
        }
        per_preset.push(format!("{name}:{local_compared}"));
    }
    let ok = !saw_nan && min_value >= -1e-9 && max_gap <= 1e-7 && compared > 0;
    let details = format!(
        "min form value = {}, finite-finite rows = {compared} ({}), max |lhs-rhs| = {} at {argmax}; skipped: {skipped} sentinel rows (infinite-temperature partner), {open_rows} open-evolution rows (bath share, gap up to {})",
        fe(min_value),
        per_preset.join(", "),
        fe(max_gap),
        fe(open_gap)
    );
    Ok((ok, details))
}

/// Entropy-rate identity residual |dS/dt + beta dQ/dt| along one run, plus
/// an inclusion mask: interior samples, beta finite on the whole stencil,
/// and outside fixed dimensionless windows around the kinks (beta crossing,
/// pure-state edges) where the identity's derivatives blow up.
fn residual_series(
    cfg: &ScenarioConfig,
    windows: &[(f64, f64)],
) -> Result<(Vec<f64>, Vec<bool>)> {
    let traj = scenario_trajectory(cfg)?;
    let table = analyze(&traj)?;
    let res = entropy_heat_rate_residual(&traj, Label::A)?;
    let (scale, _) = time_unit(&cfg.model);
    let xs: Vec<f64> = traj.times.iter().map(|&t| t * scale).collect();
    let beta = a_col(&table, |a| a.beta);
    let included: Vec<bool> = (0..xs.len())
        .map(|i| {
            i > 0
                && i < xs.len() - 1
                && beta[i - 1].is_finite()
                && beta[i].is_finite()
                && beta[i + 1].is_finite()
                && !windows.iter().any(|&(lo, hi)| xs[i] >= lo && xs[i] <= hi)
        })
        .collect();
    Ok((res, included))
}

/// Peak residuals of a coarse run and a doubled run, compared at the same
/// time points (every coarse sample is a fine sample), so the step halves
/// while the local truncation coefficient stays fixed.
fn matched_peaks(
    name: &str,
    n: usize,
    windows: &[(f64, f64)],
) -> Result<(f64, f64, usize)> {
    let (res_c, inc_c) = residual_series(&preset_with(name, |c| c.samples = n)?, windows)?;
    let (res_f, inc_f) = residual_series(&preset_with(name, |c| c.samples = 2 * n)?, windows)?;
    let mut peak_c = 0.0f64;
    let mut peak_f = 0.0f64;
    let mut used = 0usize;
    for i in 0..res_c.len() {
        if inc_c[i] && inc_f[2 * i] {
            peak_c = peak_c.max(res_c[i].abs());
            peak_f = peak_f.max(res_f[2 * i].abs());
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::BadSpec("no samples left after exclusions".into()));
    }
    Ok((peak_c, peak_f, used))
}

/// Doubling the sample count shrinks the entropy-rate identity residual at
/// second order for both the damped qubit and the exchange pair.
fn criterion_5() -> Result<(bool, String)> {
    let se_windows = [(0.0, 0.05), (LN_2 - 0.05, LN_2 + 0.05)];
    let jc_windows = [
        (0.0, 0.05),
        (FRAC_PI_4 - 0.01, FRAC_PI_4 + 0.01),
        (FRAC_PI_2 - 0.05, FRAC_PI_2 + 1.0),
    ];
    let (se_coarse, se_fine, se_used) = matched_peaks("se-lindblad", 500, &se_windows)?;
    let (jc_coarse, jc_fine, jc_used) = matched_peaks("jc-excited-vacuum", 500, &jc_windows)?;
    let r_se = se_coarse / se_fine;
    let r_jc = jc_coarse / jc_fine;
    let ok = r_se >= 3.5 && r_jc >= 3.5;
    let details = format!(
        "damped qubit: {} -> {} (x{:.2}, {} matched samples); exchange pair: {} -> {} (x{:.2}, {})",
        fe(se_coarse), fe(se_fine), r_se, se_used, fe(jc_coarse), fe(jc_fine), r_jc, jc_used
    );
    Ok((ok, details))
}

/// Exergy splits into ergotropy plus the athermality term on random states;
/// the split is exact on qubits.
fn criterion_6() -> Result<(bool, String)> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let dims = [2usize, 3, 5, 8];
    let mut e_split = 0.0f64;
    let mut min_ergo = f64::INFINITY;
    let mut min_margin = f64::INFINITY;
    let mut qubit_exact = true;
    let mut count = 0usize;
    for &d in &dims {
        for _ in 0..125 {
            let g = DMatrix::from_fn(d, d, |_, _| {
                C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let m = &g * g.adjoint();
            let tr: f64 = m.diagonal().iter().map(|z| z.re).sum();
            let rho = QuantumState::density(m / C64::new(tr, 0.0), vec![d])?;
            let gh = DMatrix::from_fn(d, d, |_, _| {
                C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let h = Operator::atomic((&gh + gh.adjoint()) * C64::new(0.5, 0.0))?;
            let parts = exergy(&rho, &h)?;
            e_split = e_split.max((parts.exergy - (parts.ergotropy + parts.nonunitary_term)).abs());
            min_ergo = min_ergo.min(parts.ergotropy);
            min_margin = min_margin.min(parts.exergy - parts.ergotropy);
            if d == 2 && parts.nonunitary_term != 0.0 {
                qubit_exact = false;
            }
            count += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = count == 500
        && e_split <= 1e-9
        && min_ergo >= -1e-12
        && min_margin >= -1e-12
        && qubit_exact
        && secs < 5.0;
    let details = format!(
        "{count} states: max |Xi - ergo - athermality| = {}, min ergo = {}, min (Xi - ergo) = {}, qubit athermality exactly zero: {qubit_exact}",
        fe(e_split), fe(min_ergo), fe(min_margin)
    );
    Ok((ok, details))
}

/// Semiclassical drive checks for one field amplitude. Returns the measured
/// quantities; see criterion_7 for the thresholds.
struct SemiclassicalProbe {
    max_q_early: f64,
    /// Closure |W_st - W_A^received - dE_int| on the factorized (mean-field
    /// product) trajectory, where the relation is an identity; the
    /// received-work sign is minus our provided-positive work column.
    closure: f64,
    /// The same expression on the full entangling run, over gt <= 0.1 and
    /// over the whole window: it measures the correlation energy the
    /// factorized relation leaves out.
    eq_early: f64,
    eq_full: f64,
    pop_gap: f64,
    mca_gap: f64,
    seconds: f64,
}

fn semiclassical_probe(table: &ThermoTable, alpha: f64) -> Result<SemiclassicalProbe> {
    let t0 = Instant::now();
    let gts = scaled_times(table);
    let u = a_col(table, |a| a.internal_energy);
    let w = a_col(table, |a| a.work);
    let q = a_col(table, |a| a.heat);
    let w_st: Vec<f64> = table.records.iter().map(|r| r.comparator_a.standard_work).collect();
    let e_int: Vec<f64> = table.records.iter().map(|r| r.interaction_energy).collect();
    let mut max_q_early = 0.0f64;
    let mut eq_early = 0.0f64;
    let mut eq_full = 0.0f64;
    for i in 0..gts.len() {
        let de = e_int[i] - e_int[0];
        let eq = (w_st[i] - (-w[i]) - de).abs();
        eq_full = eq_full.max(eq);
        if gts[i] <= 0.1 + 1e-12 {
            max_q_early = max_q_early.max(q[i].abs());
            eq_early = eq_early.max(eq);
        }
    }

    let model = table.provenance.model.clone();
    let levels = model.subsystems[1].truncation;
    let mut ground = DVector::<C64>::zeros(2);
    ground[0] = C64::new(1.0, 0.0);
    let a0 = QuantumState::pure(ground, vec![2])?;
    let b0 = QuantumState::pure(coherent_vector(alpha, levels)?, vec![levels])?;
    let (ta, tb) = propagate_mean_field(&model, &a0, &b0, &table.times, 0.01)?;
    let pe_mf: Vec<f64> = ta.states.iter().map(|s| s.density_matrix()[(1, 1)].re).collect();
    let mut pop_gap = 0.0f64;
    for i in 0..gts.len() {
        if gts[i] <= 0.1 + 1e-12 {
            pop_gap = pop_gap.max(((u[i] + 0.5) - pe_mf[i]).abs());
        }
    }

    let product = product_trajectory(&ta, &tb, &model)?;
    let (mca_a, _) = mca_rates(&product)?;
    let u_mf: Vec<f64> = pe_mf.iter().map(|&p| p - 0.5).collect();
    let du_mf = derivative(&table.times, &u_mf);
    let mca_gap = mca_a
        .work_rate
        .iter()
        .zip(&du_mf)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

    let ptable = analyze(&product)?;
    let pw = a_col(&ptable, |a| a.work);
    let pw_st: Vec<f64> = ptable.records.iter().map(|r| r.comparator_a.standard_work).collect();
    let pe_int: Vec<f64> = ptable.records.iter().map(|r| r.interaction_energy).collect();
    let mut closure = 0.0f64;
    for i in 0..pw.len() {
        closure = closure.max((pw_st[i] - (-pw[i]) - (pe_int[i] - pe_int[0])).abs());
    }
    Ok(SemiclassicalProbe {
        max_q_early,
        closure,
        eq_early,
        eq_full,
        pop_gap,
        mca_gap,
        seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Coherent drive of a ground qubit: heat stays negligible, the standard
/// work closes against the local energy and interaction-energy changes,
/// mean-field dynamics tracks the full populations, and on the mean-field
/// product trajectory the correlation-split work rate carries the whole
/// energy flow.
fn criterion_7(shared: &Shared) -> Result<(bool, String)> {
    let cfg10 = preset_with("jc-coherent-drive", |c| {
        c.initial.factors[1] = InitialFactor::Coherent(10.0);
        c.model.subsystems[1].truncation = default_coherent_levels(10.0);
    })?;
    let (table10, run10_s) = timed_table(&cfg10)?;
    let p10 = semiclassical_probe(&table10, 10.0)?;
    let p30 = semiclassical_probe(&shared.coherent30, 30.0)?;
    let t10 = run10_s + p10.seconds;
    let t30 = shared.coherent30_s + p30.seconds;
    let ok10 = p10.max_q_early < 0.02 && p10.closure < 1e-3 && p10.pop_gap < 2e-2 && p10.mca_gap < 1e-3;
    let ok30 = p30.max_q_early < 0.02 && p30.closure < 1e-3 && p30.pop_gap < 2e-2 && p30.mca_gap < 1e-3;
    let ok = ok10 && ok30 && t10 < 60.0 && t30 < 900.0;
    let details = format!(
        "alpha=10: max|Q_A|={}, closure={}, pop gap={}, |Wdot_MCA-dU/dt|={} ({:.1} s); alpha=30: {}, {}, {}, {} ({:.1} s); on the full entangling run the closure expression reaches {} / {} by gt=0.1 and {} / {} over the window (correlation energy outside the factorized relation)",
        fe(p10.max_q_early), fe(p10.closure), fe(p10.pop_gap), fe(p10.mca_gap), t10,
        fe(p30.max_q_early), fe(p30.closure), fe(p30.pop_gap), fe(p30.mca_gap), t30,
        fe(p10.eq_early), fe(p30.eq_early), fe(p10.eq_full), fe(p30.eq_full)
    );
    Ok((ok, details))
}

/// Compare the qubit-A ledgers of two tables. Energies are compared as
/// changes from the start (the two models place the qubit's zero of energy
/// half a quantum apart); beta is compared only above the entropy floor.
fn compare_a_sides(x: &ThermoTable, y: &ThermoTable, tol: f64) -> (f64, usize, Option<String>) {
    let mut worst = 0.0f64;
    let mut beta_compared = 0usize;
    let mut mismatch = None;
    let x0 = &x.records[0].a;
    let y0 = &y.records[0].a;
    for i in 0..x.records.len() {
        let a = &x.records[i].a;
        let b = &y.records[i].a;
        let pairs: [(&str, f64, f64); 8] = [
            ("dU_A", a.internal_energy - x0.internal_energy, b.internal_energy - y0.internal_energy),
            ("dUth_A", a.thermal_energy - x0.thermal_energy, b.thermal_energy - y0.thermal_energy),
            ("S_A", a.entropy, b.entropy),
            ("Q_A", a.heat, b.heat),
            ("W_A", a.work, b.work),
            ("ergo_A", a.ergotropy, b.ergotropy),
            ("exergy_A", a.exergy, b.exergy),
            ("nonuni_A", a.nonunitary_term, b.nonunitary_term),
        ];
        for (name, va, vb) in pairs {
            if !close(va, vb, tol) {
                mismatch.get_or_insert_with(|| format!("{name} at sample {i}: {va} vs {vb}"));
            }
            if va.is_finite() && vb.is_finite() {
                worst = worst.max((va - vb).abs());
            }
        }
        // sigma_A carries a divergence over the partner's matched thermal
        // state; when the partner is borderline pure its infinite-beta
        // sentinel flips between pipelines, so compare only above the floor.
        let partner_deep = match (&x.records[i].b, &y.records[i].b) {
            (Some(pa), Some(pb)) => {
                pa.entropy >= BETA_COMPARE_ENTROPY_FLOOR && pb.entropy >= BETA_COMPARE_ENTROPY_FLOOR
            }
            _ => false,
        };
        if partner_deep && !close(a.sigma, b.sigma, tol) {
            mismatch.get_or_insert_with(|| format!("sigma_A at sample {i}: {} vs {}", a.sigma, b.sigma));
        }
        let deep_enough =
            a.entropy >= BETA_COMPARE_ENTROPY_FLOOR && b.entropy >= BETA_COMPARE_ENTROPY_FLOOR;
        if deep_enough {
            beta_compared += 1;
            if !close(a.beta, b.beta, tol) {
                mismatch.get_or_insert_with(|| format!("beta_A at sample {i}: {} vs {}", a.beta, b.beta));
            }
        } else if a.beta.is_finite() != b.beta.is_finite() && (a.entropy - b.entropy).abs() > tol {
            mismatch.get_or_insert_with(|| format!("beta_A class at sample {i}"));
        }
    }
    (worst, beta_compared, mismatch)
}

/// Swapping the vacuum mode for a ground-state qubit leaves the emitter's
/// whole ledger unchanged; the absorbing qubit pays for its inversion only
/// after the quarter period, and correlations peak at two bits' worth.
fn criterion_8(shared: &Shared) -> Result<(bool, String)> {
    let (worst, beta_compared, mismatch) = compare_a_sides(&shared.qq2000, &shared.jc2000, 1e-9);
    let qq = &shared.qq2000;
    let gts = scaled_times(qq);
    let w_b = b_col(qq, |b| b.work)?;
    let info: Vec<f64> = qq.records.iter().map(|r| r.mutual_information).collect();
    let mut w_flat = 0.0f64;
    let mut w_after_max = f64::NEG_INFINITY;
    for i in 0..gts.len() {
        if gts[i] <= FRAC_PI_4 + 1e-12 {
            w_flat = w_flat.max(w_b[i].abs());
        } else if gts[i] < FRAC_PI_2 - 1e-12 {
            w_after_max = w_after_max.max(w_b[i]);
        }
    }
    let ipk = info
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let h = gts[1] - gts[0];
    let peak_ok = (gts[ipk] - FRAC_PI_4).abs() <= h && (info[ipk] - 2.0 * LN_2).abs() <= 1e-6;
    let ok = mismatch.is_none()
        && w_flat <= 1e-9
        && w_after_max < 0.0
        && peak_ok
        && shared.qq2000_s < 5.0;
    let details = format!(
        "A-side ledgers: max gap = {} ({} beta rows above entropy floor{}), W_B flat to {} before pi/4 then max {} after, I_AB peak {} at gt={:.6}",
        fe(worst),
        beta_compared,
        mismatch.as_deref().map(|m| format!("; first mismatch {m}")).unwrap_or_default(),
        fe(w_flat),
        fe(w_after_max),
        fe((info[ipk] - 2.0 * LN_2).abs()),
        gts[ipk]
    );
    Ok((ok, details))
}

/// The two superposition presets give the same emitter ledger, and its work
/// output never retreats over the half period.
fn criterion_9() -> Result<(bool, String)> {
    let t0 = Instant::now();
    let jc = run_scenario(&preset_config("jc-superposition-vacuum")?)?;
    let qq = run_scenario(&preset_config("qq-superposition-ground")?)?;
    let (worst, beta_compared, mismatch) = compare_a_sides(&qq, &jc, 1e-6);
    let mut monotone_slack = 0.0f64;
    for table in [&jc, &qq] {
        let w = a_col(table, |a| a.work);
        for i in 1..w.len() {
            monotone_slack = monotone_slack.max(w[i - 1] - w[i]);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = mismatch.is_none() && monotone_slack <= 1e-6 && secs < 10.0;
    let details = format!(
        "A-side ledgers: max gap = {} ({} beta rows above entropy floor{}), worst W_A backstep = {}, run {:.2} s",
        fe(worst),
        beta_compared,
        mismatch.as_deref().map(|m| format!("; first mismatch {m}")).unwrap_or_default(),
        fe(monotone_slack),
        secs
    );
    Ok((ok, details))
}

/// Over a full exchange period the qubit energy is time-symmetric and the
/// cumulative heat and work both return to zero.
fn criterion_10() -> Result<(bool, String)> {
    let t0 = Instant::now();
    let t = run_scenario(&preset_config("jc-excited-vacuum-full")?)?;
    let u = a_col(&t, |a| a.internal_energy);
    let q = a_col(&t, |a| a.heat);
    let w = a_col(&t, |a| a.work);
    let n = u.len();
    let mut sym = 0.0f64;
    for i in 0..n {
        sym = sym.max((u[i] - u[n - 1 - i]).abs());
    }
    let q_end = q[n - 1].abs();
    let w_end = w[n - 1].abs();
    let secs = t0.elapsed().as_secs_f64();
    let ok = sym <= 1e-8 && q_end <= 1e-6 && w_end <= 1e-6 && secs < 5.0;
    let details = format!(
        "max |U_A(t) - U_A(T-t)| = {}, |Q_A(T)| = {}, |W_A(T)| = {}, run {:.2} s",
        fe(sym), fe(q_end), fe(w_end), secs
    );
    Ok((ok, details))
}

/// Quadratically interpolated position of a local maximum of `y` around
/// index `i` on a uniform grid `xs`.
fn refine_peak(xs: &[f64], y: &[f64], i: usize) -> f64 {
    let h = xs[1] - xs[0];
    let denom = y[i - 1] - 2.0 * y[i] + y[i + 1];
    if denom.abs() < 1e-300 {
        return xs[i];
    }
    xs[i] + 0.5 * h * (y[i - 1] - y[i + 1]) / denom
}

/// Damped-mode regimes: at moderate damping the qubit's work law is the
/// same piecewise form as the bare emission case and the mode's intake
/// decays away; strong damping suppresses the intake; near-zero damping
/// restores periodic exchange.
fn criterion_11(shared: &Shared) -> Result<(bool, String)> {
    let t0 = Instant::now();
    let rc = run_scenario(&preset_config("se-rc")?)?;
    let w_a = a_col(&rc, |a| a.work);
    let u_a = a_col(&rc, |a| a.internal_energy);
    let w_b = b_col(&rc, |b| b.work)?;
    let q_b = b_col(&rc, |b| b.heat)?;
    let piecewise = |p: f64| if p >= 0.5 { 2.0 * (1.0 - p) } else { 1.0 };
    let mut law_gap = 0.0f64;
    for i in 0..w_a.len() {
        law_gap = law_gap.max((w_a[i] - piecewise(u_a[i] + 0.5)).abs());
    }
    let se_w_end = shared.se2000.records.last().unwrap().a.work;
    let asym_gap = (w_a[w_a.len() - 1] - se_w_end).abs();
    let min_w_b = w_b.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    let peak_w_b = max_abs(&w_b);
    let peak_q_b = max_abs(&q_b);
    let end_w_b = w_b[w_b.len() - 1].abs();
    let end_q_b = q_b[q_b.len() - 1].abs();

    let rc10 = run_scenario(&preset_with("se-rc", |c| {
        let kappa = 10.0 * c.model.coupling;
        c.model.dissipator = Some(Dissipator { jump: JumpId::LoweringOnB, rate: kappa });
    })?)?;
    let peak_w_b_10 = max_abs(&b_col(&rc10, |b| b.work)?);

    let slow = run_scenario(&preset_with("se-rc", |c| {
        let kappa = 0.01 * c.model.coupling;
        c.model.dissipator = Some(Dissipator { jump: JumpId::LoweringOnB, rate: kappa });
        c.t_max = 10.0;
        c.samples = 2000;
    })?)?;
    let xs = scaled_times(&slow);
    let pe: Vec<f64> = a_col(&slow, |a| a.internal_energy).iter().map(|&u| u + 0.5).collect();
    let mut peaks = vec![0.0f64];
    for i in 1..pe.len() - 1 {
        if pe[i] > 0.8 && pe[i] >= pe[i - 1] && pe[i] > pe[i + 1] {
            peaks.push(refine_peak(&xs, &pe, i));
        }
    }
    let periods: Vec<f64> = peaks.windows(2).map(|w| w[1] - w[0]).collect();
    let mean_period = periods.iter().sum::<f64>() / periods.len().max(1) as f64;
    let mut drift = 0.0f64;
    for p in &periods {
        drift = drift.max((p - mean_period).abs() / mean_period);
    }
    let nominal_err = (mean_period - PI).abs() / PI;

    let secs = t0.elapsed().as_secs_f64();
    let ok = law_gap <= 5e-2
        && asym_gap <= 5e-2
        && min_w_b < -1e-3
        && end_w_b <= 0.1 * peak_w_b
        && end_q_b <= 0.1 * peak_q_b
        && peak_w_b_10 < peak_w_b
        && periods.len() >= 3
        && drift < 0.02
        && nominal_err < 0.02
        && secs < 120.0;
    let details = format!(
        "work law gap = {}, asymptote gap vs bare emission = {}, min W_RC = {}, end/peak |W_RC| = {}/{}, |Q_RC| = {}/{}; strong damping peak |W_RC| = {}; weak damping: {} periods, drift {}, period vs pi off by {}; run {:.2} s",
        fe(law_gap), fe(asym_gap), fe(min_w_b), fe(end_w_b), fe(peak_w_b), fe(end_q_b), fe(peak_q_b),
        fe(peak_w_b_10), periods.len(), fe(drift), fe(nominal_err), secs
    );
    Ok((ok, details))
}
