//! Builds the cubic B-spline basis for a study country, anchors the
//! coefficients at the most recent survey and turns two latent curves into
//! sector shares.
//!
//! ```text
//! cargo run --example spline_basis -- Kenya
//! ```

use supplyshare::model::{compose_shares, latent_curve, reconstruct_betas};
use supplyshare::regions::study_country;
use supplyshare::spline::{BasisSet, DEFAULT_SPACING};
use supplyshare::Error;

fn main() -> supplyshare::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "Kenya".into());
    let country = study_country(&name).ok_or_else(|| Error::Validation(format!("`{name}` is not a study country")))?;
    let window = (1990.0, 2025.0);
    let grid: Vec<f64> = (1990..=2025).map(f64::from).collect();
    let basis = BasisSet::new(country.name, country.recent_year, window, DEFAULT_SPACING, &grid)?;

    println!("{} ({}), latest survey {}", country.name, country.region, country.recent_year);
    println!("interior knots: {:?}", basis.knots.interior);
    println!("{} basis functions, reference index {}", basis.n_basis(), basis.k_star);
    let worst = (0..grid.len())
        .map(|r| (basis.basis.row(r).sum() - 1.0).abs())
        .fold(0.0, f64::max);
    println!("largest deviation from partition of unity: {worst:.2e}");

    // Public share rising before the latest survey, commercial share falling.
    let k = basis.n_basis();
    let public: Vec<f64> = (0..k - 1).map(|h| if h < basis.k_star { 0.15 } else { 0.0 }).collect();
    let commercial: Vec<f64> = (0..k - 1).map(|h| if h < basis.k_star { -0.1 } else { 0.0 }).collect();
    let psi1 = latent_curve(&reconstruct_betas(0.4, &public, basis.k_star)?, &basis)?;
    let psi2 = latent_curve(&reconstruct_betas(0.2, &commercial, basis.k_star)?, &basis)?;

    println!("{:>6}{:>10}{:>10}{:>10}", "year", "public", "private", "other");
    for (i, year) in grid.iter().enumerate().step_by(5) {
        let s = compose_shares(psi1[i], psi2[i]);
        println!("{year:>6}{:>10.3}{:>10.3}{:>10.3}", s.phi1, s.phi2, s.phi3);
    }
    Ok(())
}
