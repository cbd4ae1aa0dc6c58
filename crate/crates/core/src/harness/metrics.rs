//! Agreement metrics between model and expert scores on an integer scale.
//!
//! QWK uses quadratic weights `(i - j)^2 / max^2` and the expected matrix
//! from the outer product of the marginals. Expanding both sums gives
//!
//! ```text
//! Σ w·O = Σ (m_k - e_k)^2 / max^2
//! Σ w·E = (n·Σm² + n·Σe² - 2·Σm·Σe) / (n·max^2)
//! ```
//!
//! so kappa needs only five integer moments, computed exactly.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub exact_agreement: f64,
    pub mae: f64,
    pub rmse: f64,
    pub qwk: f64,
    /// Expected disagreement was zero; qwk was set by rule, not computed.
    pub qwk_degenerate: bool,
}

/// `pairs` are `(model, expert)`. `None` for an empty input.
pub fn compute(pairs: &[(u32, u32)]) -> Option<Metrics> {
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as i128;
    let (mut exact, mut abs, mut sq) = (0i128, 0i128, 0i128);
    let (mut sm, mut se, mut smm, mut see) = (0i128, 0i128, 0i128, 0i128);
    for &(m, e) in pairs {
        let (m, e) = (i128::from(m), i128::from(e));
        let d = m - e;
        exact += i128::from(d == 0);
        abs += d.abs();
        sq += d * d;
        sm += m;
        se += e;
        smm += m * m;
        see += e * e;
    }
    let nf = n as f64;
    let expected = n * smm + n * see - 2 * sm * se;
    let (qwk, degenerate) = if expected == 0 {
        (if sq == 0 { 1.0 } else { 0.0 }, true)
    } else {
        (1.0 - (n * sq) as f64 / expected as f64, false)
    };
    Some(Metrics {
        n: pairs.len(),
        exact_agreement: exact as f64 / nf,
        mae: abs as f64 / nf,
        rmse: (sq as f64 / nf).sqrt(),
        qwk,
        qwk_degenerate: degenerate,
    })
}
