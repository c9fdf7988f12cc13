//! Gaussian process regression on a 1-D function, with predictive bands.

use romopt::gp::{fit_gp, mean_gradient, GpConfig};

fn main() -> romopt::error::Result<()> {
    let x: Vec<Vec<f64>> = (0..12).map(|i| vec![-1.0 + 2.0 * i as f64 / 11.0]).collect();
    let y: Vec<f64> = x.iter().map(|v| (3.0 * v[0]).sin() + 0.5 * v[0]).collect();
    let model = fit_gp(&x, &y, &GpConfig::noiseless())?;
    println!("log marginal likelihood {:.3}", model.log_likelihood());

    for q in [-0.95, -0.3, 0.0, 0.42, 0.9, 1.5] {
        let (m, v) = model.predict(&[q])?;
        let g = mean_gradient(&model, &[q])?[0];
        let truth = (3.0 * q).sin() + 0.5 * q;
        println!("x {q:5.2}: mean {m:8.4} +- {:.4} (truth {truth:8.4}), slope {g:7.3}", 2.0 * v.sqrt());
    }
    Ok(())
}
