//! Geometry operators against the finite-difference oracle and against
//! closed-form values on classical metrics.

mod common;

use common::*;
use geodesk::expr::parse;
use geodesk::geometry::{
    bracket, exterior_derivative, first_bianchi_residual, lie_derivative,
    metric_compatibility_residual, reconstruction_3d_residual, riemann_symmetry_residual,
    second_bianchi_residual, PointGeometry, TensorField,
};
use geodesk::tensor::PointTensor;

fn sphere_metric() -> OracleMetric {
    OracleMetric::from_strings(
        &["theta", "phi"],
        &["1", "0", "0", "sin(theta)^2"],
    )
}

fn flat3() -> OracleMetric {
    OracleMetric::from_strings(
        &["x", "y", "z"],
        &["1", "0", "0", "0", "1", "0", "0", "0", "1"],
    )
}

fn field(coords: &[&str], texts: &[&str], up: usize, down: usize) -> TensorField {
    let names: Vec<String> = coords.iter().map(|s| s.to_string()).collect();
    let comps = texts
        .iter()
        .map(|t| parse(t).unwrap().bind(&names).unwrap())
        .collect();
    TensorField::new(up, down, coords.len(), comps)
}

#[test]
fn flat_metric_has_no_connection_or_curvature() {
    let m = flat3().engine_field();
    let pg = PointGeometry::new(&m, &[0.3, -1.2, 0.7], 3).unwrap();
    for v in pg.christoffel_values() {
        assert_eq!(v, 0.0);
    }
    for v in pg.riemann_values().unwrap() {
        assert_eq!(v, 0.0);
    }
    for v in pg.ricci_values().unwrap() {
        assert_eq!(v, 0.0);
    }
    assert_eq!(pg.scalar_curvature().unwrap().value(), 0.0);
}

#[test]
fn sphere_christoffels_match_closed_form_and_fd() {
    let oracle = sphere_metric();
    let m = oracle.engine_field();
    let theta = std::f64::consts::FRAC_PI_4;
    let point = [theta, 0.9];
    let pg = PointGeometry::new(&m, &point, 3).unwrap();
    let gamma = pg.christoffel_values();
    let dim = 2;
    let at = |k: usize, i: usize, j: usize| gamma[(k * dim + i) * dim + j];
    // Gamma^theta_phiphi = -sin cos = -1/2 at pi/4; Gamma^phi_thetaphi = cot = 1.
    assert_rel_close(at(0, 1, 1), -0.5, 1e-12, 1e-12, "Gamma^t_pp");
    assert_rel_close(at(1, 0, 1), 1.0, 1e-12, 1e-12, "Gamma^p_tp");
    assert_rel_close(at(1, 1, 0), 1.0, 1e-12, 1e-12, "Gamma^p_pt");

    let fd = christoffel_fd(&oracle, &point, 1e-4);
    for t in 0..dim * dim * dim {
        assert_rel_close(gamma[t], fd[t], 1e-6, 1e-8, "christoffel vs fd");
    }
}

#[test]
fn sphere_lowered_riemann_sign_convention() {
    // Unit 2-sphere: R_theta,phi,theta,phi = sin^2(theta).
    let m = sphere_metric().engine_field();
    let theta: f64 = 1.1;
    let pg = PointGeometry::new(&m, &[theta, -0.4], 3).unwrap();
    let low = pg.lowered_riemann_values().unwrap();
    let dim = 2;
    let at = |i: usize, j: usize, k: usize, l: usize| low[((i * dim + j) * dim + k) * dim + l];
    assert_rel_close(at(0, 1, 0, 1), theta.sin().powi(2), 1e-10, 1e-12, "R_tptp");
    // Scalar curvature of the unit sphere is 2.
    assert_rel_close(
        pg.scalar_curvature().unwrap().value(),
        2.0,
        1e-10,
        1e-12,
        "sphere tau",
    );
}

#[test]
fn riemann_matches_fd_on_sphere() {
    let oracle = sphere_metric();
    let m = oracle.engine_field();
    let point = [0.8, 1.7];
    let pg = PointGeometry::new(&m, &point, 3).unwrap();
    let engine = pg.riemann_values().unwrap();
    let fd = riemann_fd(&oracle, &point, 1e-3, 1e-4);
    for t in 0..engine.len() {
        assert_rel_close(engine[t], fd[t], 1e-5, 1e-6, "riemann vs fd");
    }
}

#[test]
fn randomized_metrics_match_fd() {
    for case in 0..3u64 {
        let dim = 2 + (case as usize % 2);
        let oracle = random_metric(900 + case, dim);
        let m = oracle.engine_field();
        for point in random_points(40 + case, dim, 3) {
            let pg = PointGeometry::new(&m, &point, 3).unwrap();
            let gamma = pg.christoffel_values();
            let fd_g = christoffel_fd(&oracle, &point, 1e-4);
            for t in 0..gamma.len() {
                assert_rel_close(gamma[t], fd_g[t], 1e-5, 1e-7, "random christoffel");
            }
            let riem = pg.riemann_values().unwrap();
            let fd_r = riemann_fd(&oracle, &point, 1e-3, 1e-4);
            for t in 0..riem.len() {
                assert_rel_close(riem[t], fd_r[t], 1e-5, 1e-6, "random riemann");
            }
        }
    }
}

#[test]
fn geometry_invariants_hold_on_random_metrics() {
    for case in 0..2u64 {
        let dim = 2 + (case as usize);
        let oracle = random_metric(1700 + case, dim);
        let m = oracle.engine_field();
        for point in random_points(99 + case, dim, 3) {
            let pg = PointGeometry::new(&m, &point, 3).unwrap();
            let frame = pg.orthonormal_frame().unwrap();
            let r = metric_compatibility_residual(&pg, &frame).unwrap();
            assert!(r.scaled() < 1e-9, "nabla g residual {}", r.scaled());
            let r = riemann_symmetry_residual(&pg, &frame).unwrap();
            assert!(r.scaled() < 1e-8, "symmetry residual {}", r.scaled());
            let r = first_bianchi_residual(&pg, &frame).unwrap();
            assert!(r.scaled() < 1e-8, "bianchi1 residual {}", r.scaled());
            let r = second_bianchi_residual(&pg, &frame).unwrap();
            assert!(r.scaled() < 1e-7, "bianchi2 residual {}", r.scaled());
            if dim == 3 {
                let r = reconstruction_3d_residual(&pg, &frame).unwrap();
                assert!(r.scaled() < 1e-8, "3d reconstruction residual {}", r.scaled());
            }
        }
    }
}

#[test]
fn euclidean_hessian_and_gradient() {
    let m = OracleMetric::from_strings(&["x", "y"], &["1", "0", "0", "1"]).engine_field();
    let pg = PointGeometry::new(&m, &[0.7, -0.2], 3).unwrap();
    let omega = parse("x^2+y^2")
        .unwrap()
        .bind(&["x".into(), "y".into()])
        .unwrap()
        .eval_jet(&[0.7, -0.2], 3)
        .unwrap();
    let grad = pg.gradient(&omega).unwrap();
    assert_rel_close(grad[0].value(), 1.4, 1e-12, 1e-14, "grad x");
    assert_rel_close(grad[1].value(), -0.4, 1e-12, 1e-14, "grad y");
    let hess = pg.hessian(&omega).unwrap();
    for (t, want) in [(0usize, 2.0), (1, 0.0), (2, 0.0), (3, 2.0)] {
        assert_rel_close(hess[t].value(), want, 1e-12, 1e-14, "hessian entry");
    }
    let lap = pg.laplacian_trace(&omega).unwrap();
    assert_rel_close(lap.value(), 4.0, 1e-12, 1e-14, "laplacian");
    // Constant potential: everything vanishes.
    let c = parse("3")
        .unwrap()
        .bind(&["x".into(), "y".into()])
        .unwrap()
        .eval_jet(&[0.7, -0.2], 3)
        .unwrap();
    assert!(pg.gradient(&c).unwrap().iter().all(|j| j.value() == 0.0));
    assert!(pg.hessian(&c).unwrap().iter().all(|j| j.value() == 0.0));
}

#[test]
fn hessian_matches_fd_on_curved_metric() {
    let oracle = random_metric(3100, 3);
    let m = oracle.engine_field();
    let coords = ["x", "y", "z"];
    let omega_src = "0.4*x*y+exp(0.3*z)-sin(x)";
    let omega_ast = parse(omega_src).unwrap();
    let names: Vec<String> = coords.iter().map(|s| s.to_string()).collect();
    let omega = omega_ast.clone().bind(&names).unwrap();
    let point = [0.2, -0.5, 0.4];
    let pg = PointGeometry::new(&m, &point, 3).unwrap();
    let hess = pg.hessian(&omega.eval_jet(&point, 3).unwrap()).unwrap();
    // Oracle: Hess_ij = d_i d_j omega - Gamma^m_ij d_m omega.
    let gamma = christoffel_fd(&oracle, &point, 1e-4);
    let f = |p: &[f64]| eval_f64(&omega_ast, &names, p);
    for i in 0..3 {
        for j in 0..3 {
            let mut want = fd2(&f, &point, i, j, 1e-3);
            for mslot in 0..3 {
                want -= gamma[(mslot * 3 + i) * 3 + j] * fd1(&f, &point, mslot, 1e-4);
            }
            assert_rel_close(hess[i * 3 + j].value(), want, 1e-5, 1e-6, "hessian vs fd");
        }
    }
}

#[test]
fn divergence_of_flrw_comoving_flow() {
    // a(t) = t^(2/3), spatial dim 3: div(d_t) = 3 * (2/3) / t = 2/t.
    let exp_43 = 4.0 / 3.0;
    let gxx = format!("t^{exp_43}");
    let m = OracleMetric::from_strings(
        &["t", "x", "y", "z"],
        &[
            "-1", "0", "0", "0", //
            "0", &gxx, "0", "0", //
            "0", "0", &gxx, "0", //
            "0", "0", "0", &gxx,
        ],
    )
    .engine_field();
    let point = [1.3, 0.2, -0.4, 0.9];
    let pg = PointGeometry::new(&m, &point, 3).unwrap();
    let u = field(&["t", "x", "y", "z"], &["1", "0", "0", "0"], 1, 0)
        .eval(&point, 3)
        .unwrap();
    let div = pg.divergence(&u).unwrap();
    assert_rel_close(div.value(), 2.0 / point[0], 1e-12, 1e-13, "flrw divergence");
}

#[test]
fn divergence_of_radial_field_is_dimension() {
    let m = OracleMetric::from_strings(&["x", "y"], &["1", "0", "0", "1"]).engine_field();
    let point = [0.3, 0.8];
    let pg = PointGeometry::new(&m, &point, 2).unwrap();
    let radial = field(&["x", "y"], &["x", "y"], 1, 0).eval(&point, 2).unwrap();
    assert_rel_close(
        pg.divergence(&radial).unwrap().value(),
        2.0,
        1e-13,
        1e-14,
        "radial divergence",
    );
    let constant = field(&["x", "y"], &["1", "2"], 1, 0).eval(&point, 2).unwrap();
    assert_eq!(pg.divergence(&constant).unwrap().value(), 0.0);
}

#[test]
fn brackets_and_lie_derivatives() {
    let coords = ["x", "y"];
    let point = [0.4, -0.9];
    let x = field(&coords, &["x*y", "y"], 1, 0).eval(&point, 3).unwrap();
    // [X, X] = 0.
    let b = bracket(&x, &x).unwrap();
    assert!(b.comps.iter().all(|j| j.value().abs() < 1e-15));
    // Rotation field is Killing for the Euclidean metric.
    let m = OracleMetric::from_strings(&coords, &["1", "0", "0", "1"]).engine_field();
    let pg = PointGeometry::new(&m, &point, 3).unwrap();
    let rot = field(&coords, &["-y", "x"], 1, 0).eval(&point, 3).unwrap();
    let g = PointTensor::new(0, 2, 2, pg.g.clone());
    let lie_g = lie_derivative(&rot, &g).unwrap();
    for j in &lie_g.comps {
        assert!(j.value().abs() < 1e-15, "rotation is Killing");
    }
    // Bracket against the FD oracle on a nontrivial pair.
    let y = field(&coords, &["sin(y)", "x*x"], 1, 0).eval(&point, 3).unwrap();
    let xy = bracket(&x, &y).unwrap();
    let names: Vec<String> = coords.iter().map(|s| s.to_string()).collect();
    let xc = [parse("x*y").unwrap(), parse("y").unwrap()];
    let yc = [parse("sin(y)").unwrap(), parse("x*x").unwrap()];
    for k in 0..2 {
        let mut want = 0.0;
        for i in 0..2 {
            let yf = |p: &[f64]| eval_f64(&yc[k], &names, p);
            let xf = |p: &[f64]| eval_f64(&xc[k], &names, p);
            want += eval_f64(&xc[i], &names, &point) * fd1(&yf, &point, i, 1e-5)
                - eval_f64(&yc[i], &names, &point) * fd1(&xf, &point, i, 1e-5);
        }
        assert_rel_close(xy.comps[k].value(), want, 1e-8, 1e-9, "bracket vs fd");
    }
}

#[test]
fn exterior_derivative_basics() {
    let coords = ["x", "y", "z"];
    let point = [0.2, 0.5, 1.4];
    // d(f dz) = f' .. with f = f(z) only: closed.
    let eta = field(&coords, &["0", "0", "exp(-z)/(2*sqrt(z))"], 0, 1)
        .eval(&point, 3)
        .unwrap();
    let deta = exterior_derivative(&eta).unwrap();
    for j in &deta.comps {
        assert!(j.value().abs() < 1e-13, "f(z) dz is closed");
    }
    // d(x dy) = dx ^ dy.
    let a = field(&coords, &["0", "x", "0"], 0, 1).eval(&point, 3).unwrap();
    let da = exterior_derivative(&a).unwrap();
    assert_rel_close(da.get(&[0, 1]).value(), 1.0, 1e-14, 1e-15, "d(x dy) xy");
    assert_rel_close(da.get(&[1, 0]).value(), -1.0, 1e-14, 1e-15, "d(x dy) yx");
    assert_eq!(da.get(&[0, 2]).value(), 0.0);
    // d(dA) = 0 for a generic one-form.
    let b = field(&coords, &["y*z", "sin(x)", "x*y*z"], 0, 1)
        .eval(&point, 3)
        .unwrap();
    let db = exterior_derivative(&b).unwrap();
    let ddb = exterior_derivative(&db).unwrap();
    for j in &ddb.comps {
        assert!(j.value().abs() < 1e-12, "d o d = 0");
    }
    // Non-antisymmetric degree-2 input is rejected.
    let sym = field(&coords, &["1", "0", "0", "0", "1", "0", "0", "0", "1"], 0, 2)
        .eval(&point, 3)
        .unwrap();
    assert!(exterior_derivative(&sym).is_err());
}

#[test]
fn covariant_derivative_kills_metric_and_flat_constants() {
    let oracle = random_metric(77, 3);
    let m = oracle.engine_field();
    let point = [0.1, 0.3, -0.6];
    let pg = PointGeometry::new(&m, &point, 3).unwrap();
    let g = PointTensor::new(0, 2, 3, pg.g.clone());
    let nabla_g = pg.covariant_derivative(&g).unwrap();
    for j in &nabla_g.comps {
        assert!(j.value().abs() < 1e-13, "nabla g = 0, got {}", j.value());
    }
    // Constant tensor on a flat chart.
    let flat = flat3().engine_field();
    let pgf = PointGeometry::new(&flat, &point, 2).unwrap();
    let t = field(&["x", "y", "z"], &["2", "0", "1", "0", "5", "0", "0", "0", "-1"], 1, 1)
        .eval(&point, 2)
        .unwrap();
    let nt = pgf.covariant_derivative(&t).unwrap();
    for j in &nt.comps {
        assert_eq!(j.value(), 0.0);
    }
}

#[test]
fn singular_metric_is_reported() {
    let m = OracleMetric::from_strings(&["x", "y"], &["x", "0", "0", "1"]).engine_field();
    let err = PointGeometry::new(&m, &[0.0, 1.0], 2).unwrap_err();
    assert!(err.to_string().contains("singular"));
}

#[test]
fn insufficient_order_is_reported() {
    let m = sphere_metric().engine_field();
    let pg = PointGeometry::new(&m, &[0.7, 0.1], 1).unwrap();
    assert!(pg.riemann().is_err());
    let frame = pg.orthonormal_frame().unwrap();
    assert!(second_bianchi_residual(
        &PointGeometry::new(&m, &[0.7, 0.1], 2).unwrap(),
        &frame
    )
    .is_err());
}
