//! The reference 20-period annual setup: discount curve and per-expiry
//! parameters (`|beta| = 0.15`, `rho = -0.7`, `theta = 1`, no displacement,
//! no Gaussian part). Also shipped as `fixtures/curve.csv` and
//! `fixtures/model.json` at the repository root.

use crate::market_data::{DiscountCurve, Market, TenorStructure};
use crate::model::{LiborModel, ModelParams};

/// `B_1(0) .. B_20(0)`.
pub const TABLE_BONDS: [f64; 20] = [
    0.971717, 0.94045, 0.91688, 0.899313, 0.878639, 0.854831, 0.833278, 0.814074, 0.795193, 0.776518, 0.758545,
    0.741143, 0.724019, 0.707144, 0.690566, 0.674257, 0.658177, 0.642334, 0.626756, 0.6115,
];

pub const TABLE_KAPPA: [f64; 19] = [
    4.00000000, 3.95918367, 3.91836735, 3.87755102, 3.83673469, 3.79591837, 3.75510204, 3.71428571, 3.67346939,
    3.63265306, 3.59183673, 3.55102041, 3.51020408, 3.46938776, 3.42857143, 3.38775510, 3.34693878, 3.30612245,
    3.26530612,
];

pub const TABLE_EPS: [f64; 19] = [
    3.00000000, 2.97959184, 2.95918367, 2.93877551, 2.91836735, 2.89795918, 2.87755102, 2.85714286, 2.83673469,
    2.81632653, 2.79591837, 2.77551020, 2.75510204, 2.73469388, 2.71428571, 2.69387755, 2.67346939, 2.65306122,
    2.63265306,
];

/// Correlation decay used for the caplet experiment.
pub const CAPLET_DECAY: f64 = 0.073;
/// Correlation decay used for the swaption experiment.
pub const SWAPTION_DECAY: f64 = 0.0553;
/// Correlation decay used for the semi-annual calibration setup.
pub const CALIBRATION_DECAY: f64 = 0.118;

pub fn table_tenor() -> TenorStructure {
    TenorStructure::uniform(20, 1.0).expect("static tenor")
}

pub fn table_curve() -> DiscountCurve {
    DiscountCurve::new(TABLE_BONDS.to_vec()).expect("static curve")
}

pub fn table_market() -> Market {
    Market::new(table_tenor(), table_curve()).expect("static market")
}

pub fn table_params(corr_decay: f64) -> ModelParams {
    ModelParams {
        alpha: vec![0.0; 19],
        beta_norm: vec![0.15; 19],
        rho: vec![-0.7; 19],
        kappa: TABLE_KAPPA.to_vec(),
        theta: vec![1.0; 19],
        eps: TABLE_EPS.to_vec(),
        gamma: Vec::new(),
        corr_decay,
    }
}

pub fn table_model(corr_decay: f64) -> LiborModel {
    LiborModel::new(table_params(corr_decay), &table_tenor()).expect("static model")
}
