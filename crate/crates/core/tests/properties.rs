use delaystab::dde::{build_system, lipschitz_probe, SystemDef};
use delaystab::lyapunov::{check_theorem5, dini_derivative, Functional, GridFunction};
use delaystab::segment::{prolong, NormConfig};
use delaystab::stability::{fit_kl_envelope, Budget, EnvelopeMode, Verdict};
use delaystab::{simulate, Family, Sampler, SamplerConfig, Segment, SpaceSpec};
use proptest::prelude::*;

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![
        (1usize..5).prop_map(|harmonics| Family::Fourier { harmonics }),
        (1usize..5).prop_map(|degree| Family::Polynomial { degree }),
        (1usize..6).prop_map(|breakpoints| Family::PiecewiseLinear { breakpoints }),
    ]
}

/// A random history with its delay.
fn segment() -> impl Strategy<Value = Segment<f64>> {
    (family(), 0.5f64..2.0, 1usize..3, 10usize..41, any::<u64>(), 0.1f64..5.0).prop_map(
        |(family, r, dim, intervals, seed, radius)| {
            let cfg = SamplerConfig::new(family, SpaceSpec::SupC0, radius)
                .with_seed(seed)
                .with_dim(dim)
                .with_grid(r, intervals);
            Sampler::new(cfg).unwrap().draw(0).unwrap()
        },
    )
}

fn pair() -> impl Strategy<Value = (Segment<f64>, Segment<f64>)> {
    segment().prop_flat_map(|x| {
        let (r, n, dim) = (x.delay(), x.intervals(), x.dim());
        (family(), any::<u64>()).prop_map(move |(family, seed)| {
            let cfg = SamplerConfig::new(family, SpaceSpec::SupC0, 2.0)
                .with_seed(seed)
                .with_dim(dim)
                .with_grid(r, n);
            (x.clone(), Sampler::new(cfg).unwrap().draw(1).unwrap())
        })
    })
}

fn all_norms(x: &Segment<f64>) -> Vec<f64> {
    let nc = NormConfig::default();
    let mut v = vec![nc.sup(x)];
    for p in [1.5, 2.0, 4.0, f64::INFINITY] {
        v.push(nc.lp_deriv(x, p).unwrap());
    }
    v.extend(nc.hoelder_many(x, &[0.25, 0.5, 1.0]).unwrap());
    v
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn norms_are_absolutely_homogeneous(x in segment(), c in -10.0f64..10.0) {
        prop_assume!(c.abs() > 1e-3);
        let base = all_norms(&x);
        let scaled = all_norms(&x.scaled(c));
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!(rel(c.abs() * a, *b) <= 1e-10, "{} vs {}", c.abs() * a, b);
        }
    }

    #[test]
    fn norms_satisfy_triangle_inequality((x, y) in pair()) {
        let sum = x.axpy(1.0, &y).unwrap();
        let (nx, ny, ns) = (all_norms(&x), all_norms(&y), all_norms(&sum));
        for k in 0..nx.len() {
            prop_assert!(ns[k] <= nx[k] + ny[k] + 1e-8);
        }
    }

    #[test]
    fn embedding_and_monotonicity(x in segment(), p in 1.1f64..8.0, dq in 0.0f64..8.0) {
        let nc = NormConfig::default();
        let q = p + dq;
        let r = x.delay();
        let lp = nc.lp_deriv(&x, p).unwrap();
        let lq = nc.lp_deriv(&x, q).unwrap();
        let hp = nc.hoelder(&x, 1.0 - 1.0 / p).unwrap();
        let hq = nc.hoelder(&x, 1.0 - 1.0 / q).unwrap();
        let dmax = nc.max_deriv(&x);
        let factor = r.powf(1.0 / p - 1.0 / q);
        prop_assert!(hp <= lp + 1e-6);
        prop_assert!(lp <= factor * lq + 1e-6);
        prop_assert!(hp <= factor * hq + 1e-6);
        prop_assert!(lp <= r.powf(1.0 / p) * dmax + 1e-6);
        prop_assert!(hp <= r.powf(1.0 / p) * dmax + 1e-6);
    }

    #[test]
    fn prolongation_composes(x in segment(), k1 in 1usize..10, k2 in 1usize..10, f in -3.0f64..3.0) {
        let n = x.intervals();
        prop_assume!(k1 + k2 <= n);
        let dt = x.spacing();
        let fv = vec![f; x.dim()];
        let twice = prolong(&prolong(&x, &fv, k1 as f64 * dt).unwrap(), &fv, k2 as f64 * dt).unwrap();
        let once = prolong(&x, &fv, (k1 + k2) as f64 * dt).unwrap();
        prop_assert!(NormConfig::default().sup(&twice.sub(&once).unwrap()) <= 1e-8);
    }

    #[test]
    fn sampler_respects_ball_and_seed(family in family(), radius in 0.01f64..10.0, seed in any::<u64>(), p in 1.5f64..6.0) {
        let space = SpaceSpec::sobolev(p).unwrap();
        let cfg = SamplerConfig::new(family, space, radius).with_seed(seed).with_grid(1.0, 40);
        let a: Vec<Segment<f64>> = Sampler::new(cfg.clone()).unwrap().sample(6).unwrap();
        let b: Vec<Segment<f64>> = Sampler::new(cfg).unwrap().sample(6).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x, y);
            prop_assert!(NormConfig::default().space(x, &space).unwrap() <= radius * (1.0 + 1e-12));
        }
    }

    #[test]
    fn grid_inverse_round_trips(mut ys in prop::collection::vec(0.0f64..5.0, 2..20), s in 0.0f64..1.0) {
        ys.sort_by(f64::total_cmp);
        ys[0] = 0.0;
        for k in 1..ys.len() {
            ys[k] = ys[k - 1] + ys[k] + 1e-3;
        }
        let n = ys.len();
        let xs: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
        let g = GridFunction::new(xs, ys).unwrap();
        let cell = 1.0 / (n - 1) as f64;
        prop_assert!((g.inverse(g.eval(s)) - s).abs() <= cell);
    }

    #[test]
    fn functionals_scale_as_declared(x in segment(), c in -4.0f64..4.0, lambda in 0.0f64..3.0) {
        let nc = NormConfig::default();
        let y = x.scaled(c);
        let ws = Functional::weighted_sup(lambda);
        let qi = Functional::quadratic_integral(lambda);
        let sn = Functional::space_norm(SpaceSpec::sobolev(2.0).unwrap());
        prop_assert!((ws.eval(&y, &nc).unwrap() - c.abs() * ws.eval(&x, &nc).unwrap()).abs() <= 1e-10 * (1.0 + ws.eval(&y, &nc).unwrap()));
        prop_assert!((qi.eval(&y, &nc).unwrap() - c * c * qi.eval(&x, &nc).unwrap()).abs() <= 1e-10 * (1.0 + qi.eval(&y, &nc).unwrap()));
        prop_assert!((sn.eval(&y, &nc).unwrap() - c.abs() * sn.eval(&x, &nc).unwrap()).abs() <= 1e-10 * (1.0 + sn.eval(&y, &nc).unwrap()));
    }
}

fn linear(a: f64, b: f64, r: f64) -> delaystab::DelaySystem<f64> {
    build_system(&SystemDef::new("linear_scalar", 1, r, &[("a", a), ("b", b)])).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn flow_is_a_semigroup(a in -2.0f64..1.0, b in -1.5f64..1.5, seed in any::<u64>(), k1 in 1usize..60, k2 in 1usize..60) {
        let sys = linear(a, b, 1.0);
        let cfg = SamplerConfig::new(Family::Fourier { harmonics: 3 }, SpaceSpec::SupC0, 1.0).with_seed(seed).with_grid(1.0, 20);
        let x0: Segment<f64> = Sampler::new(cfg).unwrap().draw(0).unwrap();
        let h = 0.05;
        let (t1, t2) = (k1 as f64 * h, k2 as f64 * h);
        let full = simulate(&sys, &x0, t1 + t2, h).unwrap();
        let mid = full.segment_at(t1).unwrap();
        let rest = simulate(&sys, &mid, t2, h).unwrap();
        let d = (full.value_at(t1 + t2).unwrap()[0] - rest.value_at(t2).unwrap()[0]).abs();
        prop_assert!(d <= 1e-10 * (1.0 + full.value_at(t1 + t2).unwrap()[0].abs()), "{d}");
    }

    #[test]
    fn rk4_converges_at_fourth_order(a in -2.0f64..0.5, b in -1.0f64..1.0, seed in any::<u64>()) {
        let sys = linear(a, b, 1.0);
        let cfg = SamplerConfig::new(Family::Fourier { harmonics: 2 }, SpaceSpec::SupC0, 1.0).with_seed(seed).with_grid(1.0, 20);
        let x0: Segment<f64> = Sampler::new(cfg).unwrap().draw(0).unwrap();
        let t_end = 3.0;
        let end = |h: f64| simulate(&sys, &x0, t_end, h).unwrap().value_at(t_end).unwrap()[0];
        let reference = end(1.0 / 640.0);
        let e1 = (end(1.0 / 20.0) - reference).abs();
        let e2 = (end(1.0 / 40.0) - reference).abs();
        prop_assume!(e1 > 1e-11);
        prop_assert!(e1 / e2 >= 12.0, "{e1} {e2}");
    }

    #[test]
    fn sobolev_flow_distance_shrinks_with_time(a in -2.0f64..1.0, b in -1.0f64..1.0, seed in any::<u64>()) {
        let sys = linear(a, b, 1.0);
        let cfg = SamplerConfig::new(Family::PiecewiseLinear { breakpoints: 1 }, SpaceSpec::SupC0, 1.0).with_seed(seed).with_grid(1.0, 400);
        let x0: Segment<f64> = Sampler::new(cfg).unwrap().draw(0).unwrap();
        let kink = (1..x0.intervals()).find(|&i| x0.deriv_left(i) != x0.deriv(i)).map(|i| x0.node(i));
        prop_assume!(kink.is_none_or(|s| s > -0.85 && s < -0.15));
        let space = SpaceSpec::sobolev(2.0).unwrap();
        let inc = delaystab::lyapunov::flow_increments(&sys, &x0, &[0.1, 0.05, 0.025, 0.0125], &space, &NormConfig::default()).unwrap();
        for w in inc.windows(2) {
            prop_assert!(w[1].norm <= w[0].norm + 1e-12);
        }
    }

    #[test]
    fn builtin_lipschitz_moduli_hold(radius in 0.1f64..5.0, seed in any::<u64>(), c in 0.1f64..2.0, k in -2.0f64..2.0) {
        for def in [
            SystemDef::new("linear_scalar", 1, 1.0, &[("a", -c), ("b", k)]),
            SystemDef::new("saturating", 1, 0.7, &[("c", c), ("k", k)]),
            SystemDef::new("distributed_linear", 1, 1.0, &[("A0_1_1", -c), ("pieces", 2.0), ("K0_1_1", k), ("K1_1_1", c)]),
            SystemDef::new("linear_vector", 2, 1.0, &[("A0_1_1", -c), ("A0_1_2", k), ("A1_2_1", c)]),
        ] {
            let sys = build_system::<f64>(&def).unwrap();
            let seen = lipschitz_probe(&sys, radius, 40, seed).unwrap();
            prop_assert!(seen <= sys.lipschitz_modulus(radius) * (1.0 + 1e-8) + 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn envelope_dominates_and_grows_with_budget(a in -2.0f64..-0.2, b in -0.2f64..0.2, seed in any::<u64>()) {
        let sys = linear(a, b, 1.0);
        let space = SpaceSpec::SupC0;
        let small = Budget::default().with_samples(8).with_seed(seed).with_horizon(4.0);
        let large = small.clone().with_samples(16);
        let times = small.report_grid(1.0, 4.0);
        let f1 = fit_kl_envelope(&sys, &space, 1.0, 3, &times, &small, EnvelopeMode::Uniform).unwrap();
        let f2 = fit_kl_envelope(&sys, &space, 1.0, 3, &times, &large, EnvelopeMode::Uniform).unwrap();
        prop_assert!(f1.envelope.is_kl_shaped() && f2.envelope.is_kl_shaped());
        for smp in &f2.samples {
            for (t, n) in times.iter().zip(&smp.norms) {
                prop_assert!(*n <= f2.envelope.eval(smp.x0_norm, *t));
            }
        }
        for (r1, r2) in f1.envelope.sigma.iter().zip(&f2.envelope.sigma) {
            for (v1, v2) in r1.iter().zip(r2) {
                prop_assert!(v1 <= v2);
            }
        }
    }

    #[test]
    fn exponential_decay_implies_dini_bound(seed in any::<u64>()) {
        let sys = linear(-1.0, 0.0, 1.0);
        let v = Functional::weighted_sup(1.0);
        let budget = Budget::default().with_samples(4).with_seed(seed);
        let rep = check_theorem5(
            &sys, &v, &GridFunction::linear((-1.0f64).exp()), &GridFunction::linear(1.0),
            &SpaceSpec::SupC0, 1.0, 2.0, &budget,
        ).unwrap();
        prop_assume!(rep.verdict == Verdict::Consistent);
        let set = delaystab::stability::InitialSet::new(&SpaceSpec::SupC0, 1.0, 1, 1.0, &budget).unwrap();
        for i in 0..set.len() {
            let x: Segment<f64> = set.get(i).unwrap();
            let vx = v.eval(&x, &budget.norms).unwrap();
            let d = dini_derivative(&sys, &v, &x, &budget.norms).unwrap();
            prop_assert!(d.estimate <= -vx * 0.95 + 1e-12, "{} vs {}", d.estimate, vx);
        }
    }
}
