use proptest::prelude::*;

use unitlab::algebra::{Superoperator, C64};
use unitlab::fock::{self, UnitParams};
use unitlab::kernels::{self, OperatorKernel};
use unitlab::random;
use unitlab::trotter::Partition;

fn partition(t: f64) -> impl Strategy<Value = Partition> {
    prop::collection::vec(0.05f64..1.0, 1..8).prop_map(move |w| {
        let total: f64 = w.iter().sum();
        Partition::new(w.iter().map(|x| x * t / total).collect()).unwrap()
    })
}

fn unit_params() -> impl Strategy<Value = UnitParams> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_map(|(a, b, c, d)| UnitParams::new(C64::new(a, b), vec![C64::new(c, d)]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn refinement_is_a_join(s in partition(1.5), t in partition(1.5)) {
        let st = s.refine(&t).unwrap();
        prop_assert!(st.refines(&s));
        prop_assert!(st.refines(&t));
        prop_assert!(st.norm() <= s.norm().min(t.norm()) + 1e-12);
        prop_assert!((st.length() - 1.5).abs() < 1e-12);
        let ts = t.refine(&s).unwrap();
        prop_assert_eq!(st.count(), ts.count());
        prop_assert!(st.refine(&s).unwrap().count() == st.count());
    }

    #[test]
    fn refines_is_reflexive_and_respects_uniform_doubling(n in 1usize..64) {
        let p = Partition::uniform(2.0, n).unwrap();
        prop_assert!(p.refines(&p));
        prop_assert!(Partition::uniform(2.0, 2 * n).unwrap().refines(&p));
        prop_assert!(p.refines(&Partition::singleton(2.0).unwrap()));
    }

    #[test]
    fn fock_inner_product_is_multiplicative_under_concatenation(
        u in unit_params(), v in unit_params(), s in 0.0f64..1.5, t in 0.0f64..1.5
    ) {
        let (us, ut, vs, vt) = (u.at(s).unwrap(), u.at(t).unwrap(), v.at(s).unwrap(), v.at(t).unwrap());
        let joined = fock::fock_inner(&us.concat(&ut).unwrap(), &vs.concat(&vt).unwrap()).unwrap();
        let product = fock::fock_inner(&us, &vs).unwrap() * fock::fock_inner(&ut, &vt).unwrap();
        prop_assert!((joined - product).norm() <= 1e-12 * product.norm().max(1.0));
        let direct = fock::fock_inner(&u.at(s + t).unwrap(), &v.at(s + t).unwrap()).unwrap();
        prop_assert!((joined - direct).norm() <= 1e-12 * direct.norm().max(1.0));
    }

    #[test]
    fn kernel_json_round_trips(seed in any::<u64>(), d in 1usize..4, n in 1usize..4) {
        let mut rng = random::rng(seed);
        let names: Vec<String> = (0..n).map(|i| format!("k{i}")).collect();
        let entries: Vec<Superoperator> = (0..n * n)
            .map(|_| Superoperator::from_rep(d, random::gaussian_matrix(&mut rng, d * d, d * d)).unwrap())
            .collect();
        let kernel = OperatorKernel::new(d, names, entries).unwrap();
        let back = OperatorKernel::from_json(&kernel.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.labels(), kernel.labels());
        prop_assert!(back.max_abs_diff(&kernel) == 0.0);
    }

    #[test]
    fn block_choi_agrees_with_sampled_forms(seed in any::<u64>(), d in 1usize..3, n in 1usize..3) {
        let mut rng = random::rng(seed);
        let names: Vec<String> = (0..n).map(|i| format!("k{i}")).collect();
        let (eta, beta) = kernels::random_ce_parameters(&mut rng, d, n, 1.0);
        let kernel = kernels::ce_form_kernel(d, names, &eta, &beta).unwrap();
        let verdict = kernels::is_cpd(&kernel, unitlab::algebra::PSD_TOL).unwrap();
        let sampled_min = (0..40)
            .map(|_| {
                let (sigma, a, b) = kernels::free_tuple(&mut rng, n, d, 3);
                let form = kernels::quadratic_form(&kernel, &sigma, &a, &b);
                let scale = kernels::form_scale(&kernel, &sigma, &a, &b).max(1.0);
                unitlab::algebra::hermitian_spectrum(&unitlab::algebra::hermitian_part(&form)).min() / scale
            })
            .fold(f64::INFINITY, f64::min);
        if verdict.cpd {
            prop_assert!(sampled_min >= -1e-9);
        } else {
            let w = verdict.witness.as_ref().unwrap();
            prop_assert!(w.form_min_eigenvalue < 0.0);
        }
    }
}
