//! SIC decoding order, uplink NOMA and OMA spectral efficiencies, and the
//! energy-efficiency objective.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-user spectral efficiencies of one slot.
///
/// `per_user_rate_bpshz` is indexed by the original user index; `order`
/// lists user indices in decoding order (strongest first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub order: Vec<usize>,
    pub per_user_rate_bpshz: Vec<f64>,
    pub sum_rate_bpshz: f64,
}

/// Multiple-access scheme of the uplink phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    Noma,
    Oma,
}

/// User indices (0-based) sorted by `|H|^2`, strongest first; ties keep
/// the lower index first.
pub fn sic_order(gains: &[Complex64]) -> Result<Vec<usize>> {
    if gains.is_empty() {
        return Err(Error::domain("SIC order of an empty user set"));
    }
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|&i, &j| gains[j].norm_sqr().total_cmp(&gains[i].norm_sqr()).then(i.cmp(&j)));
    Ok(order)
}

fn check_inputs(powers_w: &[f64], gains: &[Complex64], sigma2_w: f64, beta: f64) -> Result<()> {
    if powers_w.len() != gains.len() {
        return Err(Error::domain(format!(
            "{} powers for {} gains",
            powers_w.len(),
            gains.len()
        )));
    }
    if gains.is_empty() {
        return Err(Error::domain("no users"));
    }
    if let Some(p) = powers_w.iter().find(|p| !(**p >= 0.0)) {
        return Err(Error::domain(format!("transmit power {p} is negative")));
    }
    if !(sigma2_w > 0.0) {
        return Err(Error::domain(format!("noise power {sigma2_w} must be positive")));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::domain(format!("time-switching ratio {beta} outside [0, 1]")));
    }
    Ok(())
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

/// Uplink NOMA rates under SIC: each user sees interference only from the
/// users decoded after it.
pub fn noma_rates(powers_w: &[f64], gains: &[Complex64], sigma2_w: f64, beta: f64) -> Result<RateReport> {
    check_inputs(powers_w, gains, sigma2_w, beta)?;
    let order = sic_order(gains)?;
    let received: Vec<f64> = order
        .iter()
        .map(|&k| powers_w[k] * gains[k].norm_sqr())
        .collect();
    let mut rates = vec![0.0; gains.len()];
    let mut interference = 0.0;
    for (pos, &k) in order.iter().enumerate().rev() {
        rates[k] = (1.0 - beta) * log2_1p(received[pos] / (interference + sigma2_w));
        interference += received[pos];
    }
    let sum_rate_bpshz = rates.iter().sum();
    Ok(RateReport {
        order,
        per_user_rate_bpshz: rates,
        sum_rate_bpshz,
    })
}

/// Orthogonal baseline: the uplink phase is split evenly and every user
/// transmits alone in its share.
pub fn oma_rates(powers_w: &[f64], gains: &[Complex64], sigma2_w: f64, beta: f64) -> Result<RateReport> {
    check_inputs(powers_w, gains, sigma2_w, beta)?;
    let order = sic_order(gains)?;
    let share = (1.0 - beta) / gains.len() as f64;
    let rates: Vec<f64> = powers_w
        .iter()
        .zip(gains)
        .map(|(p, h)| share * log2_1p(p * h.norm_sqr() / sigma2_w))
        .collect();
    let sum_rate_bpshz = rates.iter().sum();
    Ok(RateReport {
        order,
        per_user_rate_bpshz: rates,
        sum_rate_bpshz,
    })
}

pub fn rates(
    access: Access,
    powers_w: &[f64],
    gains: &[Complex64],
    sigma2_w: f64,
    beta: f64,
) -> Result<RateReport> {
    match access {
        Access::Noma => noma_rates(powers_w, gains, sigma2_w, beta),
        Access::Oma => oma_rates(powers_w, gains, sigma2_w, beta),
    }
}

/// Sum rate per watt of fixed plus transmit power.
pub fn ee_value(rates: &RateReport, powers_w: &[f64], fixed_power_w: f64) -> f64 {
    rates.sum_rate_bpshz / (fixed_power_w + powers_w.iter().sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn real(values: &[f64]) -> Vec<Complex64> {
        values.iter().map(|&v| Complex64::new(v.sqrt(), 0.0)).collect()
    }

    #[test]
    fn order_examples() {
        assert_eq!(sic_order(&real(&[1.0, 4.0, 2.0])).unwrap(), vec![1, 2, 0]);
        assert_eq!(sic_order(&real(&[2.0, 2.0, 2.0])).unwrap(), vec![0, 1, 2]);
        assert_eq!(sic_order(&real(&[0.3])).unwrap(), vec![0]);
        assert!(sic_order(&[]).is_err());
    }

    #[test]
    fn single_user_is_interference_free() {
        let r = noma_rates(&[0.5], &real(&[6.0]), 1.0, 0.0).unwrap();
        assert_relative_eq!(r.sum_rate_bpshz, 4.0f64.log2(), max_relative = 1e-15);
        let o = oma_rates(&[0.5], &real(&[6.0]), 1.0, 0.0).unwrap();
        assert_eq!(r.per_user_rate_bpshz, o.per_user_rate_bpshz);
    }

    #[test]
    fn two_user_example() {
        // received SNRs 3 (strong) and 1 (weak)
        let r = noma_rates(&[1.0, 1.0], &real(&[3.0, 1.0]), 1.0, 0.0).unwrap();
        assert_relative_eq!(r.per_user_rate_bpshz[0], 2.5f64.log2(), max_relative = 1e-14);
        assert_relative_eq!(r.per_user_rate_bpshz[1], 1.0, max_relative = 1e-14);
        assert_relative_eq!(r.sum_rate_bpshz, 5.0f64.log2(), max_relative = 1e-14);
        let o = oma_rates(&[1.0, 1.0], &real(&[3.0, 1.0]), 1.0, 0.0).unwrap();
        assert_relative_eq!(o.per_user_rate_bpshz[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(o.per_user_rate_bpshz[1], 0.5, max_relative = 1e-14);
        assert!(o.sum_rate_bpshz < r.sum_rate_bpshz);
    }

    #[test]
    fn oma_symmetric_split() {
        let o = oma_rates(&[1.0, 1.0], &real(&[3.0, 3.0]), 1.0, 0.2).unwrap();
        for r in o.per_user_rate_bpshz {
            assert_relative_eq!(r, 0.4 * 2.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn full_harvest_slot_has_no_rate() {
        let r = noma_rates(&[1.0, 2.0], &real(&[3.0, 1.0]), 1.0, 1.0).unwrap();
        assert!(r.per_user_rate_bpshz.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_negative_power() {
        assert!(noma_rates(&[-1.0], &real(&[1.0]), 1.0, 0.0).is_err());
        assert!(oma_rates(&[1.0], &real(&[1.0]), 0.0, 0.0).is_err());
    }

    #[test]
    fn ee_examples() {
        let zero = noma_rates(&[0.0, 0.0], &real(&[3.0, 1.0]), 1.0, 0.0).unwrap();
        assert_eq!(ee_value(&zero, &[0.0, 0.0], 0.1), 0.0);
        let report = RateReport {
            order: vec![0, 1],
            per_user_rate_bpshz: vec![1.5, 0.5],
            sum_rate_bpshz: 2.0,
        };
        assert_relative_eq!(ee_value(&report, &[0.01, 0.01], 0.1), 16.666_666_666_666_668, max_relative = 1e-12);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<Complex64>, f64, f64)> {
        (1usize..6).prop_flat_map(|k| {
            (
                prop::collection::vec(0.0f64..0.1, k),
                prop::collection::vec((-1e-4f64..1e-4, -1e-4f64..1e-4), k),
                1e-13f64..1e-11,
                0.0f64..=1.0,
            )
                .prop_map(|(p, h, s, b)| {
                    let h = h.into_iter().map(|(re, im)| Complex64::new(re, im)).collect();
                    (p, h, s, b)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn sum_rate_telescopes((p, h, s, b) in instance()) {
            let r = noma_rates(&p, &h, s, b).unwrap();
            let total: f64 = p.iter().zip(&h).map(|(p, h)| p * h.norm_sqr()).sum();
            let want = (1.0 - b) * (1.0 + total / s).log2();
            prop_assert!((r.sum_rate_bpshz - want).abs() <= 1e-9 * want.abs().max(1e-300));
            let direct: f64 = r.per_user_rate_bpshz.iter().sum();
            prop_assert!((r.sum_rate_bpshz - direct).abs() <= 1e-12 * direct.abs().max(1e-300));
        }

        #[test]
        fn noma_dominates_oma((p, h, s, b) in instance()) {
            let n = noma_rates(&p, &h, s, b).unwrap();
            let o = oma_rates(&p, &h, s, b).unwrap();
            prop_assert!(n.sum_rate_bpshz >= o.sum_rate_bpshz * (1.0 - 1e-12));
        }

        #[test]
        fn weaker_power_only_hurts((p, h, s, b) in instance(), bump in 0.0f64..0.1, pick in 0usize..6) {
            let r = noma_rates(&p, &h, s, b).unwrap();
            let pos = pick % p.len();
            let victim = r.order[pos];
            for &weaker in &r.order[pos + 1..] {
                let mut q = p.clone();
                q[weaker] += bump;
                let r2 = noma_rates(&q, &h, s, b).unwrap();
                prop_assert!(r2.per_user_rate_bpshz[victim] <= r.per_user_rate_bpshz[victim]);
            }
        }

        #[test]
        fn rates_scale_with_uplink_share((p, h, s, _b) in instance(), b in 0.0f64..=1.0) {
            let full = noma_rates(&p, &h, s, 0.0).unwrap();
            let part = noma_rates(&p, &h, s, b).unwrap();
            for (f, q) in full.per_user_rate_bpshz.iter().zip(&part.per_user_rate_bpshz) {
                prop_assert!((q - (1.0 - b) * f).abs() <= 1e-12 * f.abs().max(1e-300));
            }
        }
    }
}
