//! Time-average AoI of a recorded delivery path, computed two ways.

use crate::{Error, Result};

fn check_path(deliveries: &[(u64, u64)]) -> Result<()> {
    if deliveries.len() < 2 {
        return Err(Error::domain(
            "need at least two deliveries to span a time window",
        ));
    }
    if deliveries.iter().any(|&(_, s)| s == 0) {
        return Err(Error::domain("service times must be >= 1 block"));
    }
    if deliveries.windows(2).any(|p| p[1].0 <= p[0].0) {
        return Err(Error::domain("delivery epochs must be strictly increasing"));
    }
    Ok(())
}

/// Block-by-block AoI sum between the first and last delivery epoch.
///
/// After a delivery the age equals that packet's system time; each following
/// block adds one, and a block is charged the age it reaches at its end.
pub fn aoi_from_path(deliveries: &[(u64, u64)]) -> Result<f64> {
    check_path(deliveries)?;
    let mut total: u128 = 0;
    for pair in deliveries.windows(2) {
        let (from, age_after) = pair[0];
        let to = pair[1].0;
        let mut age = age_after as u128;
        for _ in from..to {
            age += 1;
            total += age;
        }
    }
    let span = deliveries[deliveries.len() - 1].0 - deliveries[0].0;
    Ok(total as f64 / span as f64)
}

/// Same window through the trapezoid decomposition
/// `Q_k = (S_{k-1} + S_k)(S_{k-1} + S_k + 1)/2 - S_k (S_k + 1)/2`,
/// which assumes zero-wait (inter-delivery gap equals service time).
pub fn aoi_via_qk(deliveries: &[(u64, u64)]) -> Result<f64> {
    check_path(deliveries)?;
    let tri = |n: u128| n * (n + 1) / 2;
    let total: u128 = deliveries
        .windows(2)
        .map(|p| {
            let (prev, cur) = (p[0].1 as u128, p[1].1 as u128);
            tri(prev + cur) - tri(cur)
        })
        .sum();
    let span = deliveries[deliveries.len() - 1].0 - deliveries[0].0;
    Ok(total as f64 / span as f64)
}

/// Zero-wait delivery path for a sequence of service times, first packet
/// generated at epoch 0.
pub fn zero_wait_path(services: &[u64]) -> Vec<(u64, u64)> {
    let mut epoch = 0;
    services
        .iter()
        .map(|&s| {
            epoch += s;
            (epoch, s)
        })
        .collect()
}
