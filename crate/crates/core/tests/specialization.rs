//! The generic neighborhood law specialized to one leader edge, one follower
//! edge and a two-parent merge, checked against hand-written per-case laws.
//!
//! The hand-written forms regress on the neighbor state `x_j` and use the
//! `θ` gradient sign matching the `x_i − x_j` error convention.

use adasync::controllers::{
    aocm::AocmState, ie::IeState, nn::NnParams, nn::NnState, AdaptiveDesign, ControllerState, CouplingGains,
    NeighborSample, Sign,
};
use adasync::{lyapunov, AgentModel, Basis, ReferenceModel, ReferenceSignal};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const TOL: f64 = 1e-12;

struct Fixture {
    design: AdaptiveDesign,
    p: DMatrix<f64>,
    a_m_inv: DMatrix<f64>,
    b_m: DVector<f64>,
    b_i: DVector<f64>,
}

fn fixture(tau: f64, v: f64, sign: Sign) -> Fixture {
    let reference =
        ReferenceModel::vehicle_pole_placement(-4.0, [-1.0, -2.0, -3.0], ReferenceSignal::Constant(0.0)).unwrap();
    let q = DMatrix::from_diagonal(&DVector::from_column_slice(&[10.0, 1.0, 1.0]));
    let cert = lyapunov::solve_lyapunov(reference.a_m(), &q).unwrap();
    let agent = AgentModel::vehicle(tau).unwrap();
    let design =
        AdaptiveDesign::new(10.0, v, sign, &cert, reference.a_m(), reference.b_m(), agent.b(), Basis::default())
            .unwrap();
    Fixture {
        design,
        p: cert.p.clone(),
        a_m_inv: reference.a_m().clone().try_inverse().unwrap(),
        b_m: reference.b_m().clone(),
        b_i: agent.b().clone(),
    }
}

fn phi(x: &DVector<f64>) -> DVector<f64> {
    DVector::from_column_slice(&[1.0, x[2].sin()])
}

fn vec3() -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-3.0f64..3.0, 3).prop_map(DVector::from_vec)
}

fn vec2() -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-3.0f64..3.0, 2).prop_map(DVector::from_vec)
}

fn sign() -> impl Strategy<Value = Sign> {
    prop::bool::ANY.prop_map(|b| if b { Sign::Positive } else { Sign::Negative })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

fn close_v(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    (a - b).amax() <= TOL
}

/// Optimal-modification law `θ̇ = γ (φ eᵀ P b + v φ φᵀ θ bᵀ P A_m⁻¹ b)`.
fn theta_dot(f: &Fixture, phi: &DVector<f64>, e: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
    let g = f.design.gamma;
    let e_pb = (e.transpose() * &f.p * &f.b_i)[0];
    let b_pa_b = (f.b_i.transpose() * &f.p * &f.a_m_inv * &f.b_i)[0];
    phi * (g * e_pb) + phi * (g * f.design.v * phi.dot(theta) * b_pa_b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// Single leader edge: `u_1 = k_mᵀ x_m + k_r r − θᵀ φ` plus `k_m1ᵀ e`.
    #[test]
    fn leader_edge(
        tau in 0.2f64..2.0, sg in sign(), x1 in vec3(), xm in vec3(), r in -3.0f64..3.0,
        k in vec3(), k_m1 in vec3(), k_r in -2.0f64..2.0, theta in vec2(),
    ) {
        let f = fixture(tau, 1.0, sg);
        let s = AocmState { edges: vec![CouplingGains { k: k.clone(), k_r }], k_m: k_m1.clone(), theta: theta.clone() };
        let nb = [NeighborSample { weight: 1.0, state: &xm, input: Some(r) }];
        let e = &x1 - &xm;
        let ph = phi(&x1);

        let u = s.control(&f.design, &x1, &nb).unwrap();
        let oracle = k.dot(&xm) + k_m1.dot(&e) + k_r * r - theta.dot(&ph);
        prop_assert!(close(u, oracle));

        // With the aggregate feedback gain at zero this is exactly the
        // single-agent law.
        let s0 = AocmState { k_m: DVector::zeros(3), ..s.clone() };
        prop_assert!(close(s0.control(&f.design, &x1, &nb).unwrap(), k.dot(&xm) + k_r * r - theta.dot(&ph)));

        let d = s.derivative(&f.design, &x1, &nb).unwrap();
        let c = -sg.value() * f.design.gamma * (f.b_m.transpose() * &f.p * &e)[0];
        prop_assert!(close_v(&d.edges[0].k, &(&xm * c)));
        prop_assert!(close(d.edges[0].k_r, c * r));
        prop_assert!(close_v(&d.k_m, &(&e * c)));
        prop_assert!(close_v(&d.theta, &theta_dot(&f, &ph, &e, &theta)));
    }

    /// Follower edge: `u_2 = k_21ᵀ x_1 + k_m2ᵀ (x_2 − x_1) + k_r21 u_1 − θᵀ φ`.
    #[test]
    fn follower_edge(
        tau in 0.2f64..2.0, sg in sign(), x1 in vec3(), x2 in vec3(), u1 in -5.0f64..5.0,
        k21 in vec3(), km2 in vec3(), kr21 in -2.0f64..2.0, theta in vec2(), v in 0.0f64..2.0,
    ) {
        let f = fixture(tau, v, sg);
        let s = AocmState { edges: vec![CouplingGains { k: k21.clone(), k_r: kr21 }], k_m: km2.clone(), theta: theta.clone() };
        let nb = [NeighborSample { weight: 1.0, state: &x1, input: Some(u1) }];
        let e21 = &x2 - &x1;
        let ph = phi(&x2);

        let u = s.control(&f.design, &x2, &nb).unwrap();
        prop_assert!(close(u, k21.dot(&x1) + km2.dot(&e21) + kr21 * u1 - theta.dot(&ph)));

        let d = s.derivative(&f.design, &x2, &nb).unwrap();
        let c = -sg.value() * f.design.gamma * (f.b_m.transpose() * &f.p * &e21)[0];
        prop_assert!(close_v(&d.edges[0].k, &(&x1 * c)));
        prop_assert!(close_v(&d.k_m, &(&e21 * c)));
        prop_assert!(close(d.edges[0].k_r, c * u1));
        prop_assert!(close_v(&d.theta, &theta_dot(&f, &ph, &e21, &theta)));
    }

    /// Two parents with unit weights: every term is halved, laws driven by
    /// `e_31 + e_32`.
    #[test]
    fn two_parent_merge(
        tau in 0.2f64..2.0, sg in sign(), x1 in vec3(), x2 in vec3(), x3 in vec3(),
        u1 in -5.0f64..5.0, u2 in -5.0f64..5.0,
        k31 in vec3(), k32 in vec3(), km3 in vec3(), kr31 in -2.0f64..2.0, kr32 in -2.0f64..2.0, theta in vec2(),
    ) {
        let f = fixture(tau, 1.0, sg);
        let s = AocmState {
            edges: vec![CouplingGains { k: k31.clone(), k_r: kr31 }, CouplingGains { k: k32.clone(), k_r: kr32 }],
            k_m: km3.clone(),
            theta: theta.clone(),
        };
        let nb = [
            NeighborSample { weight: 1.0, state: &x1, input: Some(u1) },
            NeighborSample { weight: 1.0, state: &x2, input: Some(u2) },
        ];
        let (e31, e32) = (&x3 - &x1, &x3 - &x2);
        let sum = &e31 + &e32;
        let ph = phi(&x3);

        let u = s.control(&f.design, &x3, &nb).unwrap();
        let oracle = k31.dot(&x1) / 2.0 + k32.dot(&x2) / 2.0 + km3.dot(&sum) / 2.0 + kr31 * u1 / 2.0 + kr32 * u2 / 2.0
            - theta.dot(&ph) / 2.0;
        prop_assert!(close(u, oracle));

        let d = s.derivative(&f.design, &x3, &nb).unwrap();
        let c = -sg.value() * f.design.gamma * (f.b_m.transpose() * &f.p * &sum)[0];
        prop_assert!(close_v(&d.edges[0].k, &(&x1 * c)));
        prop_assert!(close_v(&d.edges[1].k, &(&x2 * c)));
        prop_assert!(close_v(&d.k_m, &(&sum * c)));
        prop_assert!(close(d.edges[0].k_r, c * u1));
        prop_assert!(close(d.edges[1].k_r, c * u2));
        prop_assert!(close_v(&d.theta, &theta_dot(&f, &ph, &sum, &theta)));
    }

    /// Input estimation on a two-parent merge: `û` replaces `k_r u_j` and is
    /// driven by `−sgn γ b_mᵀ P Ξ`.
    #[test]
    fn estimator_merge(
        tau in 0.2f64..2.0, sg in sign(), x1 in vec3(), x2 in vec3(), x3 in vec3(),
        k31 in vec3(), k32 in vec3(), km3 in vec3(), uh1 in -2.0f64..2.0, uh2 in -2.0f64..2.0, theta in vec2(),
    ) {
        let f = fixture(tau, 1.0, sg);
        let s = IeState {
            edges: vec![
                adasync::controllers::ie::EstimatorGains { k: k31.clone(), u_hat: uh1 },
                adasync::controllers::ie::EstimatorGains { k: k32.clone(), u_hat: uh2 },
            ],
            k_m: km3.clone(),
            theta: theta.clone(),
        };
        let nb = [
            NeighborSample { weight: 1.0, state: &x1, input: Some(100.0) },
            NeighborSample { weight: 1.0, state: &x2, input: None },
        ];
        let sum = (&x3 - &x1) + (&x3 - &x2);
        let ph = phi(&x3);
        let u = s.control(&f.design, &x3, &nb).unwrap();
        let oracle = (k31.dot(&x1) + k32.dot(&x2) + km3.dot(&sum) + uh1 + uh2 - theta.dot(&ph)) / 2.0;
        prop_assert!(close(u, oracle));
        let d = s.derivative(&f.design, &x3, &nb).unwrap();
        let c = -sg.value() * f.design.gamma * (f.b_m.transpose() * &f.p * &sum)[0];
        prop_assert!(close(d.edges[0].u_hat, c) && close(d.edges[1].u_hat, c));
        prop_assert!(close_v(&d.theta, &theta_dot(&f, &ph, &sum, &theta)));
    }

    /// Neural-network uncertainty term on a follower edge:
    /// `θ̇ = γ φ s_b`, `Ẇ = γ s_b x̄ (V ⊙ σ)ᵀ`, `s_b = eᵀ P b`.
    #[test]
    fn neural_follower_edge(
        tau in 0.2f64..2.0, x1 in vec3(), x2 in vec3(), u1 in -5.0f64..5.0,
        k21 in vec3(), km2 in vec3(), kr21 in -2.0f64..2.0,
        theta in prop::collection::vec(-1.0f64..1.0, 4), w in prop::collection::vec(-1.0f64..1.0, 12),
    ) {
        let f = fixture(tau, 1.0, Sign::Negative);
        let params = NnParams::new(3, 1.5, 1.0).unwrap();
        let theta = DVector::from_vec(theta);
        let w = DMatrix::from_column_slice(4, 3, &w);
        let s = NnState { edges: vec![CouplingGains { k: k21.clone(), k_r: kr21 }], k_m: km2.clone(), theta: theta.clone(), w: w.clone() };
        let nb = [NeighborSample { weight: 1.0, state: &x1, input: Some(u1) }];
        let e21 = &x2 - &x1;

        let xbar = DVector::from_column_slice(&[1.0, x2[0], x2[1], x2[2]]);
        let z = w.transpose() * &xbar;
        let sigma = z.map(|z| 1.0 / (1.0 + (-1.5 * z).exp()));
        let ph = DVector::from_iterator(4, std::iter::once(1.0).chain(sigma.iter().copied()));

        let u = s.control(&params, &x2, &nb).unwrap();
        prop_assert!(close(u, k21.dot(&x1) + km2.dot(&e21) + kr21 * u1 - theta.dot(&ph)));

        let d = s.derivative(&f.design, &params, &x2, &nb).unwrap();
        let sb = (e21.transpose() * &f.p * &f.b_i)[0];
        prop_assert!(close_v(&d.theta, &(&ph * (f.design.gamma * sb))));
        let v_sigma = sigma.component_mul(&params.v_bias);
        let w_dot = &xbar * v_sigma.transpose() * (f.design.gamma * sb);
        prop_assert!((&d.w - w_dot).amax() <= TOL);
    }

    /// `Ξ = 0` and `θ = 0` is an equilibrium of every adaptive law, whatever
    /// the gains are.
    #[test]
    fn zero_fixed_point(
        tau in 0.2f64..2.0, sg in sign(), x in vec3(), k in vec3(), km in vec3(), kr in -2.0f64..2.0,
        w in prop::collection::vec(-1.0f64..1.0, 12), u in -5.0f64..5.0,
    ) {
        let f = fixture(tau, 1.0, sg);
        let params = NnParams::new(3, 1.0, 1.0).unwrap();
        // Two parents at the same state as the agent: Ξ = 0 exactly.
        let nb = [
            NeighborSample { weight: 0.7, state: &x, input: Some(u) },
            NeighborSample { weight: 1.3, state: &x, input: Some(-u) },
        ];
        let edges = vec![CouplingGains { k: k.clone(), k_r: kr }; 2];
        let states = [
            ControllerState::Aocm(AocmState { edges: edges.clone(), k_m: km.clone(), theta: DVector::zeros(2) }),
            ControllerState::Nn(NnState { edges, k_m: km.clone(), theta: DVector::zeros(4), w: DMatrix::from_column_slice(4, 3, &w) }),
            ControllerState::Ie(IeState {
                edges: vec![adasync::controllers::ie::EstimatorGains { k: k.clone(), u_hat: kr }; 2],
                k_m: km.clone(),
                theta: DVector::zeros(2),
            }),
        ];
        for s in &states {
            let d = s.derivative(&f.design, Some(&params), &x, &nb).unwrap();
            let mut packed = vec![1.0; d.packed_len()];
            d.pack_into(&mut packed);
            prop_assert!(packed.iter().all(|&v| v == 0.0), "{:?}: {:?}", s.protocol(), packed);
        }
    }

    /// Flipping `sgn(k*_r)` negates every gain rate and leaves `θ̇` alone.
    #[test]
    fn sign_antisymmetry(tau in 0.2f64..2.0, x1 in vec3(), x2 in vec3(), u1 in -5.0f64..5.0, theta in vec2()) {
        let pos = fixture(tau, 1.0, Sign::Positive);
        let neg = fixture(tau, 1.0, Sign::Negative);
        let s = AocmState { edges: vec![CouplingGains::zeros(3)], k_m: DVector::zeros(3), theta };
        let nb = [NeighborSample { weight: 1.0, state: &x1, input: Some(u1) }];
        let a = s.derivative(&pos.design, &x2, &nb).unwrap();
        let b = s.derivative(&neg.design, &x2, &nb).unwrap();
        prop_assert_eq!(&a.edges[0].k, &(-&b.edges[0].k));
        prop_assert_eq!(a.edges[0].k_r, -b.edges[0].k_r);
        prop_assert_eq!(&a.k_m, &(-&b.k_m));
        prop_assert_eq!(&a.theta, &b.theta);
    }
}
