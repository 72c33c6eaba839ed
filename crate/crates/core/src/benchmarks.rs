//! Reference prices for the standard parameter set (`S0 = 10`, `V0 = 0.04`,
//! `ρ = -0.75`, strike 4, maturity 1, zero rates, `H = 0.12`).

use crate::models::ModelFamily;
use crate::pricing::Product;

/// Barrier band used by the reference barrier prices.
pub const BARRIER_BAND: (f64, f64) = (2.0, 15.0);

/// Exercise dates used by the reference Bermudan prices.
pub const BERMUDAN_DATES: usize = 50;

pub const STRIKE: f64 = 4.0;

pub const MATURITY: f64 = 1.0;

/// Reference price for a family and product.
pub fn reference_price(family: ModelFamily, product: Product) -> f64 {
    let row = match family {
        ModelFamily::RoughHeston => [6.0545, 6.0492, 6.0635],
        ModelFamily::RoughFourTwo => [0.0362, 0.0345, 0.0418],
        ModelFamily::RoughAlphaHyper => [6.0001, 5.9753, 6.1111],
        ModelFamily::RoughSabr => [4.9269, 4.8099, 6.0000],
        ModelFamily::RoughHestonSabr => [6.0018, 6.0000, 6.4410],
        ModelFamily::RoughQuadraticSlv => [6.0000, 5.9814, 7.1658],
    };
    match product {
        Product::European => row[0],
        Product::Barrier => row[1],
        Product::Bermudan => row[2],
    }
}
