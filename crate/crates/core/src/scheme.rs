//! One interface over every scheme: configuration, stepping and recording.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{zk_bootstrap, zk_step};
use crate::circulant::{build_reduced_operators, OperatorVariant, ReducedOperators};
use crate::diagnostics::soliton_error;
use crate::error::{KdvError, Result};
use crate::model::{
    discrete_mass, make_initial, ConservationRecord, Discretization, InitialCondition, KdVParams,
    MassConstant, Soliton, StateField, Trajectory,
};
use crate::preissman::{
    initialize_auxiliary, preissman_step, BoundaryAnchor, IterationControl, MonolithicSolver,
    StepReport,
};
use crate::reduced::{
    pq_step, pq_step_explicit, z_step, z_step_explicit, z_step_explicit_unstable, ReducedState,
    ZState,
};
use crate::stencil::{
    eight_point_explicit_step, eight_point_step, twelve_point_step, StencilOperators, TwoLevelState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Preissman,
    PreissmanMonolithic,
    Pq,
    PqExplicit,
    Z,
    ZExplicit,
    ZExplicitUnstable,
    Eight,
    EightExplicit,
    Twelve,
    Zk,
}

impl Scheme {
    pub const ALL: [Scheme; 11] = [
        Self::Preissman,
        Self::PreissmanMonolithic,
        Self::Pq,
        Self::PqExplicit,
        Self::Z,
        Self::ZExplicit,
        Self::ZExplicitUnstable,
        Self::Eight,
        Self::EightExplicit,
        Self::Twelve,
        Self::Zk,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Preissman => "preissman",
            Self::PreissmanMonolithic => "preissman-monolithic",
            Self::Pq => "pq",
            Self::PqExplicit => "pq-explicit",
            Self::Z => "z",
            Self::ZExplicit => "z-explicit",
            Self::ZExplicitUnstable => "z-explicit-unstable",
            Self::Eight => "eight",
            Self::EightExplicit => "eight-explicit",
            Self::Twelve => "twelve",
            Self::Zk => "zk",
        }
    }

    /// Schemes that invert `A` and so need an odd number of grid points.
    pub fn requires_odd_n(&self) -> bool {
        matches!(
            self,
            Self::Preissman
                | Self::Pq
                | Self::PqExplicit
                | Self::Z
                | Self::ZExplicit
                | Self::ZExplicitUnstable
        )
    }

    /// Whether the scheme solves a nonlinear system at every step.
    pub fn is_implicit(&self) -> bool {
        !matches!(
            self,
            Self::PqExplicit
                | Self::ZExplicit
                | Self::ZExplicitUnstable
                | Self::EightExplicit
                | Self::Zk
        )
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = KdvError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|k| k.as_str()).collect();
                KdvError::InvalidParameter(format!(
                    "unknown scheme {s:?} (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub scheme: Scheme,
    pub params: KdVParams,
    pub grid: Discretization,
    pub ic: InitialCondition,
    pub steps: usize,
    pub variant: OperatorVariant,
    pub anchor: BoundaryAnchor,
    pub ctl: IterationControl,
    pub snapshot_every: usize,
}

impl SimulationConfig {
    pub fn new(
        scheme: Scheme,
        params: KdVParams,
        grid: Discretization,
        ic: InitialCondition,
        steps: usize,
    ) -> Self {
        Self {
            scheme,
            params,
            grid,
            ic,
            steps,
            variant: OperatorVariant::default(),
            anchor: BoundaryAnchor::default(),
            ctl: IterationControl::default(),
            snapshot_every: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scheme.requires_odd_n() {
            self.grid.require_odd()?;
        }
        if self.anchor.index == 0 || self.anchor.index > self.grid.n {
            return Err(KdvError::InvalidParameter(format!(
                "anchor index {} outside 1..={}",
                self.anchor.index, self.grid.n
            )));
        }
        if self.snapshot_every == 0 {
            return Err(KdvError::InvalidParameter(
                "snapshot_every must be positive".into(),
            ));
        }
        Ok(())
    }
}

enum Stepper {
    Preissman {
        state: StateField,
        ops: Box<ReducedOperators>,
    },
    Monolithic {
        state: StateField,
        solver: Box<MonolithicSolver>,
    },
    Pq {
        state: ReducedState,
        ops: Box<ReducedOperators>,
        explicit: bool,
    },
    Z {
        start: ReducedState,
        state: Option<ZState>,
        ops: Box<ReducedOperators>,
    },
    Eight {
        u: Vec<f64>,
        ops: StencilOperators,
        explicit: bool,
    },
    Twelve {
        history: TwoLevelState,
        started: bool,
        ops: StencilOperators,
    },
    Zk {
        history: TwoLevelState,
        started: bool,
    },
}

/// A scheme advancing from the initial data, one level at a time.
pub struct Simulation {
    config: SimulationConfig,
    mass: MassConstant,
    oracle: Option<Soliton>,
    stepper: Stepper,
    step: usize,
}

impl Simulation {
    pub fn new(config: SimulationConfig) -> Result<Self> {
        config.validate()?;
        let params = &config.params;
        let grid = &config.grid;
        let (u0, mass) = make_initial(&config.ic, params, grid)?;
        let reduced_ops = || build_reduced_operators(params, grid).map(Box::new);
        let stepper = match config.scheme {
            Scheme::Preissman => Stepper::Preissman {
                state: initialize_auxiliary(&u0, mass, params, grid, config.anchor)?,
                ops: reduced_ops()?,
            },
            Scheme::PreissmanMonolithic => Stepper::Monolithic {
                state: initialize_auxiliary(&u0, mass, params, grid, config.anchor)?,
                solver: Box::new(MonolithicSolver::new(params, grid, Some(config.anchor))?),
            },
            Scheme::Pq | Scheme::PqExplicit => Stepper::Pq {
                state: ReducedState::from_u(&u0, mass, grid.h),
                ops: reduced_ops()?,
                explicit: config.scheme == Scheme::PqExplicit,
            },
            Scheme::Z | Scheme::ZExplicit | Scheme::ZExplicitUnstable => Stepper::Z {
                start: ReducedState::from_u(&u0, mass, grid.h),
                state: None,
                ops: reduced_ops()?,
            },
            Scheme::Eight | Scheme::EightExplicit => Stepper::Eight {
                u: u0,
                ops: StencilOperators::new(params, grid)?,
                explicit: config.scheme == Scheme::EightExplicit,
            },
            Scheme::Twelve => Stepper::Twelve {
                history: TwoLevelState::new(u0.clone(), u0)?,
                started: false,
                ops: StencilOperators::new(params, grid)?,
            },
            Scheme::Zk => Stepper::Zk {
                history: TwoLevelState::new(u0.clone(), u0)?,
                started: false,
            },
        };
        let oracle = config.ic.soliton(params);
        Ok(Self {
            config,
            mass,
            oracle,
            stepper,
            step: 0,
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn mass_constant(&self) -> MassConstant {
        self.mass
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.grid.tau
    }

    /// The full four-field state, for the schemes that carry it.
    pub fn full_state(&self) -> Option<&StateField> {
        match &self.stepper {
            Stepper::Preissman { state, .. } | Stepper::Monolithic { state, .. } => Some(state),
            _ => None,
        }
    }

    pub fn u(&self) -> Result<Vec<f64>> {
        match &self.stepper {
            Stepper::Preissman { state, .. } | Stepper::Monolithic { state, .. } => {
                Ok(state.u.clone())
            }
            Stepper::Pq { state, .. } => state.u(),
            Stepper::Z { start, state, .. } => match state {
                Some(z) => z.u(),
                None => start.u(),
            },
            Stepper::Eight { u, .. } => Ok(u.clone()),
            Stepper::Twelve { history, .. } | Stepper::Zk { history, .. } => {
                Ok(history.u_curr.clone())
            }
        }
    }

    /// Advances one level. Blow-ups carry the index of the failed step.
    pub fn advance(&mut self) -> Result<StepReport> {
        let target = self.step + 1;
        let report = self.advance_inner().map_err(|e| e.at_step(target))?;
        self.step = target;
        Ok(report)
    }

    fn advance_inner(&mut self) -> Result<StepReport> {
        let cfg = &self.config;
        let mass = self.mass;
        let explicit = StepReport::default();
        match &mut self.stepper {
            Stepper::Preissman { state, ops } => {
                let (next, report) = preissman_step(state, mass, ops, cfg.anchor, &cfg.ctl)?;
                *state = next;
                Ok(report)
            }
            Stepper::Monolithic { state, solver } => {
                let (next, report) = solver.step(state, mass, &cfg.ctl)?;
                *state = next;
                Ok(report)
            }
            Stepper::Pq {
                state,
                ops,
                explicit: true,
            } => {
                *state = pq_step_explicit(state, mass, ops, cfg.variant)?;
                Ok(explicit)
            }
            Stepper::Pq {
                state,
                ops,
                explicit: false,
            } => {
                let (next, report) = pq_step(state, mass, ops, cfg.variant, &cfg.ctl)?;
                *state = next;
                Ok(report)
            }
            Stepper::Z {
                start,
                state: state @ None,
                ops,
            } => {
                let (z, report) = ZState::bootstrap(start, mass, ops, cfg.variant, &cfg.ctl)?;
                crate::model::check_blowup(&z.q)?;
                *state = Some(z);
                Ok(report)
            }
            Stepper::Z {
                state: Some(z),
                ops,
                ..
            } => {
                let (next, report) = match cfg.scheme {
                    Scheme::ZExplicit => (z_step_explicit(z, mass, ops, cfg.variant)?, explicit),
                    Scheme::ZExplicitUnstable => (
                        z_step_explicit_unstable(z, mass, ops, cfg.variant)?,
                        explicit,
                    ),
                    _ => z_step(z, mass, ops, cfg.variant, &cfg.ctl)?,
                };
                *z = next;
                Ok(report)
            }
            Stepper::Eight {
                u,
                ops,
                explicit: true,
            } => {
                *u = eight_point_explicit_step(u, ops)?;
                Ok(explicit)
            }
            Stepper::Eight {
                u,
                ops,
                explicit: false,
            } => {
                let (next, report) = eight_point_step(u, ops, &cfg.ctl)?;
                *u = next;
                Ok(report)
            }
            Stepper::Twelve {
                history,
                started,
                ops,
            } => {
                let (next, report) = if *started {
                    twelve_point_step(history, ops, &cfg.ctl)?
                } else {
                    eight_point_step(&history.u_curr, ops, &cfg.ctl)?
                };
                *started = true;
                *history = history.clone().advance(next);
                Ok(report)
            }
            Stepper::Zk { history, started } => {
                let next = if *started {
                    zk_step(history, &cfg.params, &cfg.grid)?
                } else {
                    zk_bootstrap(&history.u_curr, &cfg.params, &cfg.grid)?
                };
                *started = true;
                *history = history.clone().advance(next);
                Ok(explicit)
            }
        }
    }

    /// Diagnostics of the current level.
    pub fn record(&self, report: StepReport) -> Result<ConservationRecord> {
        let u = self.u()?;
        let grid = &self.config.grid;
        let (linf, l2) = match self.oracle {
            Some(s) => soliton_error(
                &u,
                &self.config.params,
                grid,
                s.amplitude,
                s.center,
                self.time(),
            )?,
            None => (f64::NAN, f64::NAN),
        };
        Ok(ConservationRecord {
            step: self.step,
            time: self.time(),
            mass: discrete_mass(&u, grid.h),
            linf,
            l2,
            iterations: report.iterations,
            residual: report.residual,
        })
    }
}

/// A finished or interrupted run: everything recorded up to the last good
/// level, and the error that stopped it, if any.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub error: Option<KdvError>,
}

/// Runs `config.steps` steps, snapshotting level 0, every
/// `config.snapshot_every`-th level and the last one.
pub fn run_simulation(config: SimulationConfig) -> Result<RunOutcome> {
    let mut sim = Simulation::new(config)?;
    let steps = sim.config.steps;
    let every = sim.config.snapshot_every;
    let mut trajectory = Trajectory::default();
    trajectory
        .diagnostics
        .push(sim.record(StepReport::default())?);
    trajectory.push_snapshot(0.0, sim.u()?);
    for _ in 0..steps {
        let report = match sim.advance() {
            Ok(report) => report,
            Err(e) => {
                return Ok(RunOutcome {
                    trajectory,
                    error: Some(e),
                })
            }
        };
        trajectory.diagnostics.push(sim.record(report)?);
        let k = sim.step_index();
        if k % every == 0 || k == steps {
            trajectory.push_snapshot(sim.time(), sim.u()?);
        }
    }
    Ok(RunOutcome {
        trajectory,
        error: None,
    })
}

/// Every u-level of a run, `steps + 1` fields including the initial one.
pub fn u_levels(config: SimulationConfig) -> Result<Vec<Vec<f64>>> {
    let steps = config.steps;
    let mut sim = Simulation::new(config)?;
    let mut levels = Vec::with_capacity(steps + 1);
    levels.push(sim.u()?);
    for _ in 0..steps {
        sim.advance()?;
        levels.push(sim.u()?);
    }
    Ok(levels)
}

/// Largest `max|u|` reached within `steps` steps, or the blow-up error.
pub fn peak_amplitude(config: SimulationConfig) -> Result<f64> {
    let steps = config.steps;
    let mut sim = Simulation::new(config)?;
    let mut peak = crate::vecops::max_abs(&sim.u()?);
    for _ in 0..steps {
        sim.advance()?;
        peak = peak.max(crate::vecops::max_abs(&sim.u()?));
    }
    Ok(peak)
}
