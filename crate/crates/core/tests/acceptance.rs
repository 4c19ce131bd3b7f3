//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Tolerances and the pinned stability data are fixed here. The process exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use kdv_core::circulant::{apply_b, build_reduced_operators, rank_of, OperatorVariant, RANK_TOL};
use kdv_core::model::{discrete_mass, Discretization, InitialCondition, KdVParams, StateField};
use kdv_core::preissman::{
    assemble_d, initialize_auxiliary, ms_conservation, preissman_step, tangent_step,
    BoundaryAnchor, IterationControl, MonolithicSolver, TangentField,
};
use kdv_core::scheme::{peak_amplitude, u_levels, Scheme, Simulation, SimulationConfig};
use kdv_core::stencil::{twelve_point_residual_terms, ThreeLevelState};
use kdv_core::sweep::{Execution, RefinementStudy};
use kdv_core::{KdvError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const AMPLITUDE: f64 = 0.5;
const N: usize = 99;
const TAU_OVER_H: f64 = 0.1;

const ANCHOR_TOL: f64 = 1e-10;
const EQUIVALENCE_TOL: f64 = 1e-9;
const TWELVE_TOL: f64 = 1e-10;
const MASS_TOL: f64 = 1e-10;
const MS_TOL: f64 = 1e-10;
const ORDER_RANGE: (f64, f64) = (1.8, 2.2);
const BLOWUP_LEVEL: f64 = 1e6;

/// Instability pair: the explicit z-scheme with the unstable nonlinear
/// average, against the stable one, on a tall soliton. Found by a grid search
/// over n ∈ {25, 49, 99, 199}, A ∈ {0.5, 1, 2, 3, 4, 6}, τ ∈ [1e-4, 1].
const UNSTABLE_N: usize = 99;
const UNSTABLE_AMPLITUDE: f64 = 2.0;
const UNSTABLE_TAU: f64 = 1e-3;
const UNSTABLE_HORIZON: f64 = 20.0;
/// Bounded means the peak never exceeds this multiple of the amplitude.
const BOUNDED_FACTOR: f64 = 2.0;

/// Leapfrog stability threshold for the standard soliton at n = 99, bracketed
/// by bisection to [0.010788220, 0.010788596]; τ* lies just above it.
const ZK_STABLE_TAU: f64 = 0.0105;
const ZK_TAU_STAR: f64 = 0.011;

fn params() -> KdVParams {
    KdVParams::new(6.0, 1.0, -15.0, 15.0).expect("valid parameters")
}

fn grid(n: usize, tau: f64) -> Discretization {
    Discretization::new(&params(), n, tau).expect("valid grid")
}

fn standard_grid() -> Discretization {
    let h = params().length() / N as f64;
    grid(N, TAU_OVER_H * h)
}

fn soliton(amplitude: f64) -> InitialCondition {
    InitialCondition::Soliton {
        amplitude,
        center: 0.0,
    }
}

fn config(scheme: Scheme, g: Discretization, steps: usize) -> SimulationConfig {
    SimulationConfig::new(scheme, params(), g, soliton(AMPLITUDE), steps)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn trajectory_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| max_diff(x, y))
        .fold(0.0, f64::max)
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn rank_deficiency() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = vec![];
    for n in [3, 5, 7] {
        let g = grid(n, 0.01);
        let bare = rank_of(&assemble_d(&params(), &g, None)?, RANK_TOL);
        let anchored = rank_of(
            &assemble_d(&params(), &g, Some(BoundaryAnchor::default()))?,
            RANK_TOL,
        );
        pass &= bare == 4 * n - 1 && anchored == 4 * n;
        parts.push(format!("n={n}: {bare}/{anchored} of {}", 4 * n));
    }
    outcome(pass, parts.join(", "))
}

fn anchored_run(value: f64, steps: usize) -> Result<StateField> {
    let mut cfg = config(Scheme::Preissman, standard_grid(), steps);
    cfg.anchor = BoundaryAnchor::new(1, value, N)?;
    let mut sim = Simulation::new(cfg)?;
    for _ in 0..steps {
        sim.advance()?;
    }
    Ok(sim
        .full_state()
        .expect("preissman carries the full state")
        .clone())
}

fn anchor_independence() -> Result<Outcome> {
    let base = anchored_run(0.0, 100)?;
    let mut worst_fields = 0.0_f64;
    let mut worst_phi = 0.0_f64;
    for value in [1.0, 7.0] {
        let other = anchored_run(value, 100)?;
        worst_fields = worst_fields
            .max(max_diff(&base.u, &other.u))
            .max(max_diff(&base.v, &other.v))
            .max(max_diff(&apply_b(&base.phi), &apply_b(&other.phi)));
        let shifted: Vec<f64> = other.phi.iter().map(|x| x - value).collect();
        worst_phi = worst_phi.max(max_diff(&base.phi, &shifted));
    }
    outcome(
        worst_fields <= ANCHOR_TOL && worst_phi <= ANCHOR_TOL,
        format!("u, v, Bφ gap {worst_fields:.2e}; φ gap after shift {worst_phi:.2e} (tol {ANCHOR_TOL:e})"),
    )
}

fn equivalence_gaps(variant: OperatorVariant) -> Result<Vec<(Scheme, Scheme, f64)>> {
    let schemes = [Scheme::Preissman, Scheme::Pq, Scheme::Z, Scheme::Eight];
    let runs: Vec<Option<Vec<Vec<f64>>>> = schemes
        .iter()
        .map(|&s| {
            let mut cfg = config(s, standard_grid(), 100);
            cfg.variant = variant;
            u_levels(cfg).ok()
        })
        .collect();
    let mut gaps = vec![];
    for i in 0..schemes.len() {
        for j in i + 1..schemes.len() {
            let gap = match (&runs[i], &runs[j]) {
                (Some(a), Some(b)) => trajectory_gap(a, b),
                _ => f64::INFINITY,
            };
            gaps.push((schemes[i], schemes[j], gap));
        }
    }
    Ok(gaps)
}

fn equivalence_chain() -> Result<Outcome> {
    let gaps = equivalence_gaps(OperatorVariant::Exact)?;
    let worst = gaps.iter().map(|g| g.2).fold(0.0, f64::max);
    let detail: Vec<String> = gaps
        .iter()
        .map(|(a, b, g)| format!("{a}/{b} {g:.1e}"))
        .collect();
    outcome(
        worst <= EQUIVALENCE_TOL,
        format!("{} (tol {EQUIVALENCE_TOL:e})", detail.join(", ")),
    )
}

fn eight_twelve_identity() -> Result<Outcome> {
    let g = standard_grid();
    let levels = u_levels(config(Scheme::Eight, g, 100))?;
    let mut worst = 0.0_f64;
    for w in levels.windows(3) {
        let triple = ThreeLevelState::new(w[0].clone(), w[1].clone(), w[2].clone())?;
        worst = worst.max(twelve_point_residual_terms(&triple, &params(), &g).relative());
    }
    outcome(
        worst <= TWELVE_TOL,
        format!("worst relative residual {worst:.2e} over 99 triples (tol {TWELVE_TOL:e})"),
    )
}

fn mass_conservation() -> Result<Outcome> {
    let schemes = [
        Scheme::Preissman,
        Scheme::Pq,
        Scheme::Z,
        Scheme::Eight,
        Scheme::Twelve,
    ];
    let g = standard_grid();
    let drifts = Execution::default().map(&schemes, |&s| -> Result<f64> {
        let levels = u_levels(config(s, g, 1000))?;
        let m0 = discrete_mass(&levels[0], g.h);
        Ok(levels
            .iter()
            .map(|u| (discrete_mass(u, g.h) - m0).abs() / m0.abs())
            .fold(0.0, f64::max))
    });
    let mut pass = true;
    let mut parts = vec![];
    for (s, d) in schemes.iter().zip(drifts) {
        let d = d?;
        pass &= d <= MASS_TOL;
        parts.push(format!("{s} {d:.1e}"));
    }
    outcome(
        pass,
        format!(
            "relative drift over 1000 steps: {} (tol {MASS_TOL:e})",
            parts.join(", ")
        ),
    )
}

fn random_tangent(n: usize, rng: &mut ChaCha8Rng, anchor: BoundaryAnchor) -> TangentField {
    let mut f = || {
        (0..n)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect::<Vec<f64>>()
    };
    let mut t = TangentField::new(f(), f(), f(), f()).expect("equal lengths");
    // the anchored potential value is fixed, so its variation vanishes
    t.dphi[anchor.index - 1] = 0.0;
    t
}

fn perturbed(state: &StateField, dz: &TangentField, eps: f64) -> StateField {
    let shift = |a: &[f64], d: &[f64]| a.iter().zip(d).map(|(x, y)| x + eps * y).collect();
    StateField {
        phi: shift(&state.phi, &dz.dphi),
        u: shift(&state.u, &dz.du),
        v: shift(&state.v, &dz.dv),
        w: shift(&state.w, &dz.dw),
    }
}

fn tangent_gap(fd: &StateField, base: &StateField, t: &TangentField, eps: f64) -> f64 {
    let d = |a: &[f64], b: &[f64], c: &[f64]| {
        a.iter()
            .zip(b)
            .zip(c)
            .map(|((x, y), z)| ((x - y) / eps - z).abs())
            .fold(0.0, f64::max)
    };
    d(&fd.phi, &base.phi, &t.dphi)
        .max(d(&fd.u, &base.u, &t.du))
        .max(d(&fd.v, &base.v, &t.dv))
        .max(d(&fd.w, &base.w, &t.dw))
}

fn multisymplectic() -> Result<Outcome> {
    let p = params();
    let g = standard_grid();
    let ops = build_reduced_operators(&p, &g)?;
    let anchor = BoundaryAnchor::default();
    let ctl = IterationControl::default();
    let (u0, mass) = kdv_core::model::make_initial(&soliton(AMPLITUDE), &p, &g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut z = initialize_auxiliary(&u0, mass, &p, &g, anchor)?;
    let mut a = random_tangent(N, &mut rng, anchor);
    let mut b = random_tangent(N, &mut rng, anchor);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let (z_next, _) = preissman_step(&z, mass, &ops, anchor, &ctl)?;
        let a_next = tangent_step(&z, &z_next, &a, &ops, anchor)?;
        let b_next = tangent_step(&z, &z_next, &b, &ops, anchor)?;
        worst = worst.max(ms_conservation((&a, &a_next), (&b, &b_next), &p, &g).relative());
        z = z_next;
        a = a_next;
        b = b_next;
    }

    // directional finite differences of one step from the final base level
    let dz = random_tangent(N, &mut rng, anchor);
    let (base_next, _) = preissman_step(&z, mass, &ops, anchor, &ctl)?;
    let exact = tangent_step(&z, &base_next, &dz, &ops, anchor)?;
    let eps = [1e-2, 1e-3, 1e-4];
    let mut gaps = vec![];
    for &e in &eps {
        let start = perturbed(&z, &dz, e);
        let m = kdv_core::model::MassConstant::from_field(&start.u, g.h);
        let (fd, _) = preissman_step(&start, m, &ops, anchor, &ctl)?;
        gaps.push(tangent_gap(&fd, &base_next, &exact, e));
    }
    let ratios: Vec<f64> = gaps.windows(2).map(|w| w[0] / w[1]).collect();
    let first_order = ratios.iter().all(|r| (5.0..20.0).contains(r));
    outcome(
        worst <= MS_TOL && first_order,
        format!(
            "worst relative residual {worst:.2e} (tol {MS_TOL:e}); FD gaps {:.2e}/{:.2e}/{:.2e} at ε = 1e-2/1e-3/1e-4, ratios {:.1}/{:.1} (need 5..20)",
            gaps[0], gaps[1], gaps[2], ratios[0], ratios[1]
        ),
    )
}

fn second_order() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = vec![];
    for scheme in [Scheme::Preissman, Scheme::Eight] {
        let study = RefinementStudy {
            scheme,
            params: params(),
            amplitude: AMPLITUDE,
            center: 0.0,
            sizes: vec![49, 99, 199],
            ratio: TAU_OVER_H,
            final_time: 0.5,
        };
        let result = study.run(Execution::default())?;
        pass &= (ORDER_RANGE.0..=ORDER_RANGE.1).contains(&result.order);
        let errs: Vec<String> = result
            .levels
            .iter()
            .map(|(_, e)| format!("{e:.2e}"))
            .collect();
        parts.push(format!(
            "{scheme} order {:.3} (errors {})",
            result.order,
            errs.join(", ")
        ));
    }
    outcome(
        pass,
        format!("{} (range {:?})", parts.join("; "), ORDER_RANGE),
    )
}

fn bounded_peak(scheme: Scheme, n: usize, amplitude: f64, tau: f64, horizon: f64) -> Result<f64> {
    let steps = (horizon / tau).round() as usize;
    let cfg = SimulationConfig::new(scheme, params(), grid(n, tau), soliton(amplitude), steps);
    peak_amplitude(cfg)
}

fn blows_up(result: &Result<f64>) -> bool {
    match result {
        Err(KdvError::Blowup { max_abs, .. }) => *max_abs > BLOWUP_LEVEL,
        Ok(peak) => *peak > BLOWUP_LEVEL,
        Err(_) => false,
    }
}

fn instability() -> Result<Outcome> {
    let bound = BOUNDED_FACTOR * UNSTABLE_AMPLITUDE;
    let stable_short = bounded_peak(
        Scheme::ZExplicit,
        UNSTABLE_N,
        UNSTABLE_AMPLITUDE,
        UNSTABLE_TAU,
        2.0,
    )?;
    let stable_long = bounded_peak(
        Scheme::ZExplicit,
        UNSTABLE_N,
        UNSTABLE_AMPLITUDE,
        UNSTABLE_TAU,
        UNSTABLE_HORIZON,
    )?;
    let unstable = bounded_peak(
        Scheme::ZExplicitUnstable,
        UNSTABLE_N,
        UNSTABLE_AMPLITUDE,
        UNSTABLE_TAU,
        UNSTABLE_HORIZON,
    );
    let unstable_step = match &unstable {
        Err(KdvError::Blowup { step, .. }) => format!("step {step}"),
        other => format!("{other:?}"),
    };
    let part_a = stable_short <= bound && stable_long <= bound && blows_up(&unstable);

    let zk_stable = bounded_peak(Scheme::Zk, N, AMPLITUDE, ZK_STABLE_TAU, 2.0);
    let zk_star = bounded_peak(Scheme::Zk, N, AMPLITUDE, ZK_TAU_STAR, 2.0);
    let eight_star = bounded_peak(Scheme::Eight, N, AMPLITUDE, ZK_TAU_STAR, 2.0)?;
    let zk_star_step = match &zk_star {
        Err(KdvError::Blowup { step, .. }) => format!("step {step}"),
        other => format!("{other:?}"),
    };
    let part_b = matches!(zk_stable, Ok(p) if p <= BOUNDED_FACTOR * AMPLITUDE)
        && blows_up(&zk_star)
        && eight_star <= BOUNDED_FACTOR * AMPLITUDE;
    outcome(
        part_a && part_b,
        format!(
            "n={UNSTABLE_N} A={UNSTABLE_AMPLITUDE} τ={UNSTABLE_TAU}: z-explicit peak {stable_short:.3} to T=2, {stable_long:.3} to T={UNSTABLE_HORIZON}; z-explicit-unstable blows up at {unstable_step}. zk at τ*={ZK_TAU_STAR} blows up at {zk_star_step}, bounded at τ={ZK_STABLE_TAU}; eight peak {eight_star:.4} at τ*"
        ),
    )
}

fn degenerate_detection() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = vec![];
    for n in [3, 5] {
        let result = MonolithicSolver::new(&params(), &grid(n, 0.01), None);
        let ok = matches!(result, Err(KdvError::DegenerateSystem { rank, expected }) if rank + 1 == expected);
        pass &= ok;
        parts.push(format!(
            "n={n}: {}",
            if ok {
                "degenerate reported"
            } else {
                "not reported"
            }
        ));
    }
    outcome(pass, parts.join(", "))
}

fn one_step_u(variant: OperatorVariant, tau: f64) -> Result<Vec<f64>> {
    let mut cfg = config(Scheme::PqExplicit, grid(N, tau), 1);
    cfg.variant = variant;
    let levels = u_levels(cfg)?;
    Ok(levels[1].clone())
}

fn m2_discrepancy() -> Result<Outcome> {
    let taus = [1e-2, 1e-3, 1e-4];
    let mut diffs = vec![];
    for &tau in &taus {
        let exact = one_step_u(OperatorVariant::Exact, tau)?;
        let printed = one_step_u(OperatorVariant::Printed, tau)?;
        diffs.push(max_diff(&exact, &printed));
    }
    let ratios: Vec<f64> = diffs.windows(2).map(|w| w[0] / w[1]).collect();
    let proportional = ratios.iter().all(|r| (8.0..12.0).contains(r));
    let printed_gaps = equivalence_gaps(OperatorVariant::Printed)?;
    let printed_worst = printed_gaps.iter().map(|g| g.2).fold(0.0, f64::max);
    let exact_worst = equivalence_gaps(OperatorVariant::Exact)?
        .iter()
        .map(|g| g.2)
        .fold(0.0, f64::max);
    let printed_text = if printed_worst.is_finite() {
        format!("{printed_worst:.1e}")
    } else {
        "unbounded (the printed runs do not complete)".to_string()
    };
    let pass = diffs[0] > 0.0
        && proportional
        && printed_worst > EQUIVALENCE_TOL
        && exact_worst <= EQUIVALENCE_TOL;
    outcome(
        pass,
        format!(
            "one-step u gap {:.3e}/{:.3e}/{:.3e} at τ = 1e-2/1e-3/1e-4, ratios {:.2}/{:.2} (need 8..12); chain gap printed {printed_text}, exact {exact_worst:.1e}",
            diffs[0], diffs[1], diffs[2], ratios[0], ratios[1]
        ),
    )
}

type Criterion = (&'static str, fn() -> Result<Outcome>);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("rank deficiency of the coupled system", rank_deficiency),
        ("independence from the anchor value", anchor_independence),
        ("equivalence chain", equivalence_chain),
        ("eight/twelve point identity", eight_twelve_identity),
        ("discrete mass", mass_conservation),
        ("multisymplectic conservation", multisymplectic),
        ("second-order accuracy", second_order),
        ("instability reproductions", instability),
        ("degenerate system detection", degenerate_detection),
        ("printed versus exact second operator", m2_discrepancy),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "{} {:>2} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
