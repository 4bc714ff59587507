use kanemele::geometry::dirac_points;
use kanemele::matsubara::spin_conductivity_matsubara;
use kanemele::model::ModelParams;
use kanemele::numerics::{K0Method, QuadratureSpec, Refinement};
use kanemele::spectrum::{critical_curve, critical_energy};
use std::time::Instant;

fn run(p: &ModelParams, n: usize, radius: f64, factor: usize) -> (f64, f64, std::time::Duration) {
    let (kp, km) = dirac_points();
    let spec = QuadratureSpec {
        bz_grid: n,
        k0_method: K0Method { order: 32, tol: 1e-9 },
        refinement: Some(Refinement { centers: vec![kp, km], radius, factor }),
    };
    let t0 = Instant::now();
    let r = spin_conductivity_matsubara(p, &spec).unwrap();
    (r.sigma[0][1], r.error_estimate, t0.elapsed())
}

fn main() {
    let m = 0.01;
    let p = ModelParams {
        t: 1.0, lambda_so: 1.0, lambda_r: 0.1, r: 0.0,
        w: critical_curve(1.0, 0.1).0 + m,
        mu: critical_energy(1.0, 0.1),
    };
    for (n, radius, factor) in [
        (96, 0.13, 16), (96, 0.13, 32), (96, 0.26, 32),
        (192, 0.13, 16), (192, 0.26, 16), (288, 0.26, 12),
    ] {
        let (s, e, dt) = run(&p, n, radius, factor);
        println!("N={n:3} r={radius:.2} f={factor:2}: sigma12 = {s:+.8} (est {e:.2e}) [{dt:?}]");
    }
}
