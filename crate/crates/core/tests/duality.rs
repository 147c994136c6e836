use resdual::attention::{AttentionParams, Window};
use resdual::duality::{
    check_duality, check_full_window_limit, extract_trajectory, run_case, scatter_trajectory,
    sweep, CheckMode, DualityReport, StackSource,
};
use resdual::model::{MixerSpec, ModelConfig};
use resdual::numerics::ops::vecmat;
use resdual::numerics::Rng;
use resdual::HiddenStack;

fn random_stack(seed: u64, layers: usize, tokens: usize, d: usize) -> HiddenStack<f64> {
    HiddenStack::from_tensor(&Rng::new(seed).uniform_tensor(&[layers, tokens, d], -1.0, 1.0))
        .unwrap()
}

fn cfg(l: usize, t: usize, d: usize) -> ModelConfig {
    ModelConfig::new(l, t, d, MixerSpec::Standard, 0)
}

#[test]
fn trajectory_gather_and_scatter() {
    let h = random_stack(3, 5, 5, 2);
    let x = extract_trajectory(&h, 2).unwrap();
    assert_eq!(x.shape(), &[5, 2]);
    assert_eq!(x.row(3), h.state(3, 2).unwrap());
    let mut h2 = random_stack(4, 5, 5, 2);
    scatter_trajectory(&mut h2, 2, &x).unwrap();
    assert_eq!(h2.state(3, 2).unwrap(), h.state(3, 2).unwrap());
    let single = random_stack(5, 1, 3, 2);
    let x = extract_trajectory(&single, 1).unwrap();
    assert_eq!(x.data(), single.state(0, 1).unwrap());
    assert!(extract_trajectory(&single, 3).is_err());
}

#[test]
fn main_check_is_exact() {
    let r = run_case::<f64>(
        &cfg(4, 6, 8),
        StackSource::Random,
        Window::Finite(2),
        11,
        CheckMode::BitExact,
    )
    .unwrap();
    assert_eq!(r.global_max_abs_diff, 0.0);
    assert!(r.exact && r.passed && r.is_consistent());
    let r = run_case::<f64>(
        &cfg(4, 6, 8),
        StackSource::Forward,
        Window::Finite(2),
        11,
        CheckMode::BitExact,
    )
    .unwrap();
    assert!(r.exact);
}

#[test]
fn unit_window_reduces_to_value_path() {
    let h = random_stack(6, 4, 3, 4);
    let p = AttentionParams::random(&mut Rng::new(7), 4, -0.5, 0.5);
    let r = check_duality(&h, &p, Window::Finite(1), CheckMode::BitExact).unwrap();
    assert!(r.exact);
    let z = resdual::attention::depth_residual_read(&h, 1, 2, Window::Finite(1), &p).unwrap();
    let expect = vecmat(
        &vecmat(h.state(2, 1).unwrap(), &p.w_v).unwrap(),
        p.w_o.as_ref().unwrap(),
    )
    .unwrap();
    assert_eq!(z.data(), &expect[..]);
}

#[test]
fn full_equals_l_plus_one() {
    let h = random_stack(8, 5, 3, 4);
    let p = AttentionParams::random(&mut Rng::new(9), 4, -0.5, 0.5);
    for mode in [CheckMode::BitExact, CheckMode::Tolerance { eps: 1e-12 }] {
        let a = check_duality(&h, &p, Window::Full, mode).unwrap();
        let b = check_duality(&h, &p, Window::Finite(5), mode).unwrap();
        assert!(a.same_outcome(&b));
    }
}

#[test]
fn full_window_limit_against_dense_oracle() {
    let single = random_stack(1, 1, 2, 4);
    let p = AttentionParams::random(&mut Rng::new(2), 4, -0.5, 0.5);
    assert!(check_full_window_limit(&single, &p).unwrap().passed);

    let (h, p) =
        resdual::duality::build_case::<f64>(&cfg(3, 2, 4), StackSource::Random, 5).unwrap();
    let r = check_full_window_limit(&h, &p).unwrap();
    assert!(r.global_max_abs_diff <= 1e-12, "{}", r.global_max_abs_diff);
    let (h, p) =
        resdual::duality::build_case::<f32>(&cfg(3, 2, 4), StackSource::Random, 5).unwrap();
    let r = check_full_window_limit(&h, &p).unwrap();
    assert!(r.global_max_abs_diff <= 1e-6, "{}", r.global_max_abs_diff);

    let zero =
        HiddenStack::from_tensor(&resdual::numerics::Tensor::<f64>::zeros(&[4, 2, 4]).unwrap())
            .unwrap();
    let r = check_full_window_limit(&zero, &p.cast()).unwrap();
    assert_eq!(r.global_max_abs_diff, 0.0);
    let z = resdual::attention::depth_residual_read(&zero, 1, 3, Window::Full, &p.cast()).unwrap();
    assert!(z.data().iter().all(|&v| v == 0.0));
}

#[test]
fn sweep_is_deterministic_and_matches_direct_check() {
    let configs = [cfg(4, 3, 4)];
    let one = sweep::<f64>(
        &configs,
        &[Window::Finite(2)],
        &[11],
        StackSource::Forward,
        CheckMode::BitExact,
        false,
    )
    .unwrap();
    let direct = run_case::<f64>(
        &configs[0],
        StackSource::Forward,
        Window::Finite(2),
        11,
        CheckMode::BitExact,
    )
    .unwrap()
    .without_timing();
    assert_eq!(one, vec![direct]);

    let ks = [Window::Finite(1), Window::Finite(2), Window::Full];
    let a = sweep::<f64>(
        &configs,
        &ks,
        &[1, 2, 3],
        StackSource::Random,
        CheckMode::BitExact,
        false,
    )
    .unwrap();
    let b = sweep::<f64>(
        &configs,
        &ks,
        &[1, 2, 3],
        StackSource::Random,
        CheckMode::BitExact,
        false,
    )
    .unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert!(a.iter().all(|r| r.exact));
    assert_eq!(a[3].k, Window::Finite(2));
    assert_eq!(a[3].seed, Some(1));
}

#[test]
fn sweep_names_the_bad_config() {
    let configs = [cfg(2, 3, 4), cfg(2, 0, 4)];
    let err = sweep::<f64>(
        &configs,
        &[Window::Full],
        &[1],
        StackSource::Random,
        CheckMode::BitExact,
        false,
    )
    .unwrap_err();
    assert!(err.to_string().contains("config #1"), "{err}");
}

#[test]
fn cells_are_token_independent() {
    let h = random_stack(12, 4, 4, 4);
    let p = AttentionParams::random(&mut Rng::new(13), 4, -0.5, 0.5);
    let base = check_duality(
        &h,
        &p,
        Window::Finite(2),
        CheckMode::Tolerance { eps: 1e-12 },
    )
    .unwrap();
    let mut h2 = h.clone();
    for l in 0..4 {
        h2.state_mut(l, 0)
            .unwrap()
            .iter_mut()
            .for_each(|v| *v *= -3.0);
    }
    let r = check_duality(
        &h2,
        &p,
        Window::Finite(2),
        CheckMode::Tolerance { eps: 1e-12 },
    )
    .unwrap();
    for t in 1..4 {
        assert_eq!(r.cell_max_abs_diff[t], base.cell_max_abs_diff[t]);
    }
}

#[test]
fn report_json_schema() {
    let r: DualityReport = run_case::<f32>(
        &cfg(2, 2, 4),
        StackSource::Random,
        Window::Full,
        1,
        CheckMode::Tolerance { eps: 1e-6 },
    )
    .unwrap()
    .without_timing();
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    for key in [
        "config",
        "K",
        "mode",
        "cell_max_abs_diff",
        "global_max_abs_diff",
        "exact",
        "passed",
        "dtype",
        "seed",
        "elapsed_ms",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["K"], "full");
    assert_eq!(v["dtype"], "f32");
    assert_eq!(v["config"]["L"], 2);
    let back: DualityReport = serde_json::from_value(v).unwrap();
    assert_eq!(back, r);
    assert!(r.cells_csv().starts_with("t,layer,max_abs_diff\n"));
    assert_eq!(r.cells_csv().lines().count(), 1 + 2 * 3);
}
