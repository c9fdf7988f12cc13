//! Active subspace of a ridge function from GP-estimated gradients.

use rand::Rng;
use romopt::asub::{compute_active_subspace, estimate_gradient_samples, fit_ridge_surface};
use romopt::gp::GpConfig;
use romopt::params::Normalizer;
use romopt::rng::stream;

fn main() -> romopt::error::Result<()> {
    let d = 6;
    let a = [0.6, 0.8, 0.0, 0.0, 0.0, 0.0];
    let f = |x: &[f64]| {
        let t: f64 = x.iter().zip(&a).map(|(x, a)| x * a).sum();
        t * t + t
    };
    let norm = Normalizer::identity(d);
    let mut rng = stream(5, 0);
    let x: Vec<Vec<f64>> = (0..60).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = x.iter().map(|p| f(p)).collect();

    let grads = estimate_gradient_samples(&x, &y, &norm, &GpConfig::noiseless())?;
    let sub = compute_active_subspace(&grads, norm, 1)?;
    let ev: Vec<String> = sub.eigenvalues.iter().map(|v| format!("{v:.2e}")).collect();
    println!("eigenvalues: {}", ev.join(" "));
    println!("leading direction: {:?}", sub.direction(0).iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>());

    let ridge = fit_ridge_surface(sub, &x, &y, &GpConfig::default())?;
    let q = vec![0.3, -0.2, 0.9, -0.9, 0.5, 0.1];
    println!("ridge at q: {:.4} (truth {:.4})", ridge.eval(&q)?, f(&q));
    Ok(())
}
