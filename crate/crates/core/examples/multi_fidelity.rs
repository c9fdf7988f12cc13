//! NARGPAS against a plain GP on a function with a dominant ridge plus a
//! weaker interaction term.

use rand::Rng;
use romopt::gp::{fit_gp, GpConfig};
use romopt::mfgp::{fit_nargpas, MfConfig};
use romopt::rng::stream;

fn main() -> romopt::error::Result<()> {
    let d = 8;
    let f = |x: &[f64]| {
        let t: f64 = x.iter().enumerate().map(|(i, v)| v / (1.0 + i as f64)).sum();
        (2.0 * t).exp() + 0.05 * x[0] * x[3]
    };
    let mut rng = stream(11, 0);
    let mut draw = |n: usize| -> Vec<Vec<f64>> { (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect() };
    let (x, xt) = (draw(40), draw(200));
    let y: Vec<f64> = x.iter().map(|p| f(p)).collect();

    let gp = fit_gp(&x, &y, &GpConfig::noiseless())?;
    let mf = fit_nargpas(&x, &y, &MfConfig::default(), 11, Some(&gp))?;
    let (mut eg, mut em, mut n) = (0.0, 0.0, 0.0);
    for p in &xt {
        let t = f(p);
        eg += (gp.predict_mean(p)? - t).powi(2);
        em += (mf.predict_mean(p)? - t).powi(2);
        n += t * t;
    }
    println!("relative L2 error on 200 test points: GP {:.3e}, NARGPAS {:.3e}", (eg / n).sqrt(), (em / n).sqrt());
    Ok(())
}
