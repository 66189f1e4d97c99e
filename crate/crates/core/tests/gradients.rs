use lowrank_lab::adapters::{
    adapter_rank, deep_lora_init, fit_quadratic, lora_init, lora_step, quadratic_loss, LoraVariant,
};
use lowrank_lab::linalg::{Matrix, Rng};
use lowrank_lab::network::{
    dln_gradient_error, min_preactivation, mlp_gradient_error, Activation, DeepLinearNet, Loss, FD_STEP,
};

#[test]
fn deep_linear_gradients_match_finite_differences() {
    let mut rng = Rng::new(1);
    for depth in 2..=4 {
        let ws = (0..depth).map(|_| rng.gaussian_matrix(5, 5, 0.5)).collect();
        let net = DeepLinearNet::new(ws, Activation::Identity).unwrap();
        let phi = rng.gaussian_matrix(5, 5, 1.0);
        let err = dln_gradient_error(&net, &phi).unwrap();
        assert!(err <= 1e-6, "depth {depth}: {err}");
    }
}

#[test]
fn relu_gradients_match_away_from_kinks() {
    let mut rng = Rng::new(2);
    let mut checked = 0;
    while checked < 5 {
        let net = DeepLinearNet::new(
            vec![rng.gaussian_matrix(6, 4, 0.7), rng.gaussian_matrix(3, 6, 0.7)],
            Activation::Relu,
        )
        .unwrap();
        let x = rng.gaussian_matrix(4, 8, 1.0);
        if min_preactivation(&net, &x) <= 10.0 * FD_STEP {
            continue;
        }
        let y = rng.gaussian_matrix(3, 8, 1.0);
        let err = mlp_gradient_error(&net, &x, &y, Loss::Mse).unwrap();
        assert!(err <= 1e-6, "{err}");
        checked += 1;
    }
}

fn fd_factor_error(variant: LoraVariant) -> f64 {
    let mut rng = Rng::new(3);
    let base = rng.gaussian_matrix(6, 5, 0.3);
    let target = rng.gaussian_matrix(6, 5, 0.3);
    let mut ad = match variant {
        LoraVariant::Deep { gamma_outer } => {
            deep_lora_init(&base, 2, &(&base - &target), 0.3, gamma_outer).unwrap()
        }
        other => lora_init(&base, 2, &mut rng).unwrap().with_variant(other).unwrap(),
    };
    // move off zero so every factor gradient is nonzero
    for _ in 0..3 {
        ad = lora_step(&ad, &(&ad.effective_weight() - &target), 0.1).unwrap();
    }
    let grads = ad.factor_gradients(&(&ad.effective_weight() - &target)).unwrap();
    let eta = 1e-6;
    let before = quadratic_loss(&ad, &target);
    let after = quadratic_loss(&lora_step(&ad, &(&ad.effective_weight() - &target), eta).unwrap(), &target);
    let rates = match variant {
        LoraVariant::Vanilla => vec![1.0, 1.0],
        LoraVariant::Plus { gamma } => vec![gamma, 1.0],
        LoraVariant::Deep { gamma_outer } => vec![gamma_outer, 1.0, gamma_outer],
    };
    let predicted: f64 = grads.iter().zip(&rates).map(|(g, r)| r * g.frobenius_norm_sq()).sum::<f64>() * eta;
    ((before - after) - predicted).abs() / predicted
}

#[test]
fn adapter_factor_gradients_predict_the_first_order_decrease() {
    for v in [
        LoraVariant::Vanilla,
        LoraVariant::Plus { gamma: 4.0 },
        LoraVariant::Deep { gamma_outer: 0.5 },
    ] {
        let err = fd_factor_error(v);
        assert!(err <= 1e-4, "{v:?}: {err}");
    }
}

#[test]
fn deep_adapter_recovers_a_rank_two_update() {
    let mut rng = Rng::new(41);
    let d = 16;
    let base = rng.gaussian_matrix(d, d, (1.0 / d as f64).sqrt());
    let u = rng.gaussian_matrix(d, 2, (1.0 / d as f64).sqrt());
    let v = rng.gaussian_matrix(2, d, 1.0);
    let target = &base + &u.matmul(&v);
    let ad = deep_lora_init(&base, 8, &(&base - &target), 1e-3, 0.1).unwrap();
    let (fit, losses) = fit_quadratic(&ad, &target, 0.2, 20_000).unwrap();
    assert!(losses.last().unwrap() < &1e-6, "final loss {}", losses.last().unwrap());
    assert_eq!(adapter_rank(&fit).unwrap(), 2);
    let m = Matrix::zeros(d, d);
    assert!(lora_init(&m, d, &mut rng).is_err());
}
