use morphwing::harness::ScenarioConfig;

#[test]
#[ignore]
fn derivative_jump_scan() {
    let text = std::fs::read_to_string("/tmp/probe/fmap/short48.toml").unwrap();
    let config = ScenarioConfig::from_toml_str(&text).unwrap();
    let model = config.build_model().unwrap();
    let state0 = config.initial_state(model.modes());
    let mut x = model.flatten(&state0);
    let inputs = vec![0.0, 0.0];
    let dt = 1e-4;
    let mut prev_f: Option<nalgebra::DVector<f64>> = None;
    for step in 0..5200 {
        let t = step as f64 * dt;
        let f = model.derivative_vec(&x, &inputs).unwrap();
        if let Some(pf) = &prev_f {
            let df = (&f - pf).amax();
            if t > 0.40 && df > 50.0 * dt.sqrt() {
                // locate worst component
                let mut worst = (0usize, 0.0f64);
                for i in 0..f.len() {
                    let d = (f[i] - pf[i]).abs();
                    if d > worst.1 {
                        worst = (i, d);
                    }
                }
                println!(
                    "t={t:.4} |df|_inf={df:.3e} at comp {} (f {} -> {})",
                    worst.0, pf[worst.0], f[worst.0]
                );
            }
        }
        prev_f = Some(f.clone());
        x = morphwing::dynamics::rk4_vec(|y| model.derivative_vec(y, &inputs), &x, dt).unwrap();
    }
    // component map
    let m = model.modes();
    println!("dims: p 0-2, q 3-6, v 7-9, w 10-12, phase 13, a 14-{}, lag 14+m..14+3m, tnorm {}..{}", 13 + m, 14 + 3 * m, 13 + 4 * m);
}
