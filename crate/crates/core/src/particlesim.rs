//! Force-driven particle localization.
//!
//! Transmitters are free particles and sensors are fixed ones. Each
//! iteration the noiseless channel predicts the power every sensor should
//! see from the current particle positions; a sensor that measured more than
//! predicted pulls the particles toward it, one that measured less pushes
//! them away. The pull on particle `i` is
//! `Σ_j e_j · (v_j − x_i) / max(d(x_i, v_j), d_0)²` with `e_j` the dB error,
//! and the particle moves by `γ · f / (1 + ‖f‖)`, so no step exceeds `γ`.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Area, Point2};
use crate::propagation::{db_to_linear, linear_to_db, PropagationParams, SensorLayout, TransmitterSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsParams {
    pub max_iter: usize,
    /// Stop once the summed particle displacement of a step falls below this (m).
    pub movement_tol: f64,
    /// Stop once the norm of the dB error vector falls below this.
    pub power_tol: f64,
    /// Largest displacement of one particle per step (m).
    pub step_gain: f64,
    /// Initial particles are spread uniformly in a disc of this radius (m).
    pub init_radius: f64,
}

impl Default for PsParams {
    fn default() -> Self {
        Self { max_iter: 500, movement_tol: 1e-3, power_tol: 1e-2, step_gain: 0.05, init_radius: 0.5 }
    }
}

impl PsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.movement_tol > 0.0 && self.power_tol > 0.0) {
            return Err(Error::invalid("ps tolerances", "must be > 0"));
        }
        if !(self.step_gain > 0.0 && self.step_gain.is_finite()) {
            return Err(Error::invalid("ps_step_gain", "must be > 0"));
        }
        if !(self.init_radius >= 0.0 && self.init_radius.is_finite()) {
            return Err(Error::invalid("ps_init_radius", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsState {
    pub positions: Vec<Point2>,
    pub iteration: usize,
    pub last_movement: f64,
    pub last_error_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    Movement,
    PowerError,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::MaxIterations => "max-iterations",
            StopReason::Movement => "movement",
            StopReason::PowerError => "power-error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsDiagnostics {
    pub stop: StopReason,
    pub iterations: usize,
    /// Path-loss evaluations, one per (sensor, particle) pair per iteration.
    pub plm_evaluations: u64,
    pub error_norm: f64,
    /// Error norm seen at every iteration.
    pub error_history: Vec<f64>,
}

/// One row of a per-iteration trajectory dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    pub particle: usize,
    pub position: Point2,
    pub movement: f64,
    pub error_norm: f64,
}

/// Particles at the `n_t` strongest sensors, each displaced uniformly within
/// a disc of `init_radius`. Sensors are reused cyclically when `n_t > N_s`.
pub fn ps_initialize<R: Rng + ?Sized>(
    rss: &[f64],
    layout: &SensorLayout,
    n_t: usize,
    params: &PsParams,
    rng: &mut R,
) -> PsState {
    let mut order: Vec<usize> = (0..layout.len()).collect();
    order.sort_by(|&a, &b| rss[b].total_cmp(&rss[a]).then(a.cmp(&b)));
    let area = layout.area();
    let positions = (0..n_t)
        .map(|k| {
            let anchor = layout.positions()[order[k % order.len()]];
            let theta = rng.random::<f64>() * core::f64::consts::TAU;
            let r = params.init_radius * libm::sqrt(rng.random::<f64>());
            area.clamp(anchor + Point2::new(r * libm::cos(theta), r * libm::sin(theta)))
        })
        .collect();
    PsState { positions, iteration: 0, last_movement: f64::INFINITY, last_error_norm: f64::INFINITY }
}

/// Per-sensor error `P_meas − P_calc` (dB) for the current positions.
/// Increments `plm_evaluations` by `N_s · N_t`.
pub fn power_errors(
    positions: &[Point2],
    rss_measured: &[f64],
    layout: &SensorLayout,
    channel: &PropagationParams,
    plm_evaluations: &mut u64,
) -> Vec<f64> {
    layout
        .positions()
        .iter()
        .zip(rss_measured)
        .map(|(v, measured)| {
            let linear: f64 = positions.iter().map(|x| db_to_linear(channel.path_power_db(x.distance(*v)))).sum();
            *plm_evaluations += positions.len() as u64;
            measured - linear_to_db(linear)
        })
        .collect()
}

/// Force on every particle from the per-sensor dB errors.
pub fn ps_forces(
    positions: &[Point2],
    errors: &[f64],
    layout: &SensorLayout,
    channel: &PropagationParams,
) -> Vec<Point2> {
    positions
        .iter()
        .map(|x| {
            layout.positions().iter().zip(errors).fold(Point2::default(), |f, (v, e)| {
                let d = x.distance(*v).max(channel.ref_distance);
                f + (*v - *x) * (e / (d * d))
            })
        })
        .collect()
}

/// Bounded step, clamped to the area. Returns the summed displacement.
pub fn ps_step(state: &mut PsState, forces: &[Point2], params: &PsParams, area: Area) -> f64 {
    let mut total = 0.0;
    for (x, f) in state.positions.iter_mut().zip(forces) {
        let scale = params.step_gain / (1.0 + f.norm());
        let next = area.clamp(*x + *f * scale);
        total += next.distance(*x);
        *x = next;
    }
    state.iteration += 1;
    state.last_movement = total;
    total
}

/// Runs the simulation until the iteration budget is spent, the particles
/// stop moving, or the predicted powers match the measurements.
pub fn ps_run<R: Rng + ?Sized>(
    rss: &[f64],
    layout: &SensorLayout,
    n_t: usize,
    channel: &PropagationParams,
    params: &PsParams,
    rng: &mut R,
) -> Result<(TransmitterSet, PsDiagnostics)> {
    ps_run_traced(rss, layout, n_t, channel, params, rng, None)
}

/// [`ps_run`] that also appends every particle position per iteration.
pub fn ps_run_traced<R: Rng + ?Sized>(
    rss: &[f64],
    layout: &SensorLayout,
    n_t: usize,
    channel: &PropagationParams,
    params: &PsParams,
    rng: &mut R,
    mut trace: Option<&mut Vec<TrajectoryPoint>>,
) -> Result<(TransmitterSet, PsDiagnostics)> {
    params.validate()?;
    if rss.len() != layout.len() {
        return Err(Error::DimensionMismatch {
            what: "measurements per sensor",
            expected: layout.len(),
            found: rss.len(),
        });
    }
    if n_t == 0 {
        return Err(Error::invalid("n_t", "must be >= 1"));
    }
    let mut state = ps_initialize(rss, layout, n_t, params, rng);
    let mut plm_evaluations = 0;
    let mut error_history = Vec::new();
    let mut stop = StopReason::MaxIterations;
    while state.iteration < params.max_iter {
        let errors = power_errors(&state.positions, rss, layout, channel, &mut plm_evaluations);
        let norm = libm::sqrt(errors.iter().map(|e| e * e).sum::<f64>());
        state.last_error_norm = norm;
        error_history.push(norm);
        if norm < params.power_tol {
            stop = StopReason::PowerError;
            break;
        }
        let forces = ps_forces(&state.positions, &errors, layout, channel);
        let moved = ps_step(&mut state, &forces, params, layout.area());
        if let Some(t) = trace.as_deref_mut() {
            t.extend(state.positions.iter().enumerate().map(|(i, p)| TrajectoryPoint {
                iteration: state.iteration,
                particle: i,
                position: *p,
                movement: moved,
                error_norm: norm,
            }));
        }
        if moved < params.movement_tol {
            stop = StopReason::Movement;
            break;
        }
    }
    let diagnostics = PsDiagnostics {
        stop,
        iterations: state.iteration,
        plm_evaluations,
        error_norm: state.last_error_norm,
        error_history,
    };
    Ok((TransmitterSet::new(state.positions), diagnostics))
}

/// `N_s · N_t · N_iter`.
pub fn ps_complexity(n_s: u64, n_t: u64, n_iter: u64) -> u64 {
    n_s * n_t * n_iter
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::{grid_layout, mean_received_power};
    use crate::rng::SeedSchedule;
    use alloc::vec;

    fn setup() -> (SensorLayout, PropagationParams) {
        let layout = grid_layout(16, Area::square(20.0).unwrap()).unwrap();
        (layout, PropagationParams { shadow_variance_db: 0.0, ..PropagationParams::indoor_defaults() })
    }

    #[test]
    fn initialization_near_strongest_sensors() {
        let (layout, _) = setup();
        let mut rss = vec![-80.0; 16];
        rss[5] = -30.0;
        rss[10] = -35.0;
        let mut rng = SeedSchedule::new(1).stream("ps", 0);
        let st = ps_initialize(&rss, &layout, 2, &PsParams::default(), &mut rng);
        assert!(st.positions[0].distance(layout.positions()[5]) <= 0.5);
        assert!(st.positions[1].distance(layout.positions()[10]) <= 0.5);
        let many = ps_initialize(&rss, &layout, 20, &PsParams::default(), &mut rng);
        assert_eq!(many.positions.len(), 20);
    }

    #[test]
    fn force_signs_and_symmetry() {
        let (layout, p) = setup();
        let x = [Point2::new(10.0, 10.0)];
        assert!(ps_forces(&x, &[0.0; 16], &layout, &p).iter().all(|f| *f == Point2::default()));

        let single = SensorLayout::new(vec![Point2::new(3.0, 4.0)], Area::square(20.0).unwrap()).unwrap();
        let f = ps_forces(&[Point2::new(0.0, 0.0)], &[2.0], &single, &p)[0];
        assert!(f.x > 0.0 && f.y > 0.0 && (f.y / f.x - 4.0 / 3.0).abs() < 1e-12);
        let f = ps_forces(&[Point2::new(0.0, 0.0)], &[-2.0], &single, &p)[0];
        assert!(f.x < 0.0 && f.y < 0.0);

        let four = SensorLayout::new(
            vec![Point2::new(4.0, 5.0), Point2::new(6.0, 5.0), Point2::new(5.0, 4.0), Point2::new(5.0, 6.0)],
            Area::square(10.0).unwrap(),
        )
        .unwrap();
        let f = ps_forces(&[Point2::new(5.0, 5.0)], &[1.5; 4], &four, &p)[0];
        assert!(f.norm() < 1e-15);
    }

    #[test]
    fn step_bounds() {
        let area = Area::square(20.0).unwrap();
        let params = PsParams::default();
        let mut st =
            PsState { positions: vec![Point2::new(5.0, 5.0)], iteration: 0, last_movement: 0.0, last_error_norm: 0.0 };
        assert_eq!(ps_step(&mut st, &[Point2::default()], &params, area), 0.0);
        let moved = ps_step(&mut st, &[Point2::new(1e6, -3e6)], &params, area);
        assert!(moved <= params.step_gain + 1e-15);
        let mut edge = PsState { positions: vec![Point2::new(20.0, 0.0)], ..st.clone() };
        ps_step(&mut edge, &[Point2::new(50.0, -50.0)], &params, area);
        assert_eq!(edge.positions[0], Point2::new(20.0, 0.0));
    }

    #[test]
    fn zero_budget_returns_initialization() {
        let (layout, p) = setup();
        let rss = mean_received_power(&TransmitterSet::new(vec![Point2::new(6.0, 9.0)]), &layout, &p);
        let params = PsParams { max_iter: 0, ..PsParams::default() };
        let mut a = SeedSchedule::new(4).stream("ps", 0);
        let mut b = SeedSchedule::new(4).stream("ps", 0);
        let (est, diag) = ps_run(&rss, &layout, 1, &p, &params, &mut a).unwrap();
        let init = ps_initialize(&rss, &layout, 1, &params, &mut b);
        assert_eq!(est.coords, init.positions);
        assert_eq!(diag.stop, StopReason::MaxIterations);
        assert_eq!(diag.iterations, 0);
    }

    #[test]
    fn complexity_product() {
        assert_eq!(ps_complexity(16, 1, 500), 8000);
        assert_eq!(ps_complexity(0, 4, 500), 0);
    }
}
