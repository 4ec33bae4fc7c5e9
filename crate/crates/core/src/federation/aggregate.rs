use crate::error::{Error, Result};
use crate::numerics::{median_mad, masked_softmax};

/// Robust threshold `median - xi * MAD`; returns the flagged indices.
pub fn detect_anomalies(sims: &[f64], xi: f64) -> Result<(f64, Vec<usize>)> {
    let (med, mad) = median_mad(sims)?;
    let tau = med - xi * mad;
    Ok((tau, (0..sims.len()).filter(|&j| sims[j] < tau).collect()))
}

/// Temperature softmax over survivor similarities.
pub fn similarity_weights(sims: &[f64], nu: f64) -> Result<Vec<f64>> {
    if nu <= 0.0 {
        return Err(Error::InvalidParameter(format!("temperature must be positive, got {nu}")));
    }
    let scaled: Vec<f64> = sims.iter().map(|s| s / nu).collect();
    masked_softmax(&scaled, &vec![true; sims.len()])
}

fn check_dims(own: &[f64], others: &[&[f64]]) -> Result<()> {
    if others.iter().any(|o| o.len() != own.len()) {
        return Err(Error::ShapeMismatch(format!(
            "aggregation expects vectors of length {}",
            own.len()
        )));
    }
    Ok(())
}

/// `(1 - alpha) own + alpha sum_j w_j other_j`; unchanged with no survivors.
pub fn actor_aggregate(own: &[f64], survivors: &[&[f64]], weights: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_dims(own, survivors)?;
    if survivors.len() != weights.len() {
        return Err(Error::ShapeMismatch("one weight per survivor".into()));
    }
    if survivors.is_empty() {
        return Ok(own.to_vec());
    }
    let mut out: Vec<f64> = own.iter().map(|v| (1.0 - alpha) * v).collect();
    for (p, w) in survivors.iter().zip(weights) {
        let s = alpha * w;
        for (o, v) in out.iter_mut().zip(p.iter()) {
            *o += s * v;
        }
    }
    Ok(out)
}

/// Uniform mean over `own` and `others`.
pub fn uniform_mean(own: &[f64], others: &[&[f64]]) -> Result<Vec<f64>> {
    check_dims(own, others)?;
    let mut out = own.to_vec();
    for o in others {
        for (a, b) in out.iter_mut().zip(o.iter()) {
            *a += b;
        }
    }
    let n = (others.len() + 1) as f64;
    out.iter_mut().for_each(|a| *a /= n);
    Ok(out)
}

/// Mean of the local critic gradient and the surviving neighbors' ones.
pub fn robust_gradient(own: &[f64], survivors: &[&[f64]]) -> Result<Vec<f64>> {
    uniform_mean(own, survivors)
}

/// Gradient-tracking state of one silo.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingVariable {
    pub y: Vec<f64>,
    pub prev_robust: Vec<f64>,
}

impl TrackingVariable {
    pub fn zeros(dim: usize) -> Self {
        TrackingVariable {
            y: vec![0.0; dim],
            prev_robust: vec![0.0; dim],
        }
    }

    /// Records the new robust gradient and returns its change.
    pub fn advance(&mut self, robust: &[f64]) -> Result<Vec<f64>> {
        if robust.len() != self.prev_robust.len() {
            return Err(Error::ShapeMismatch("robust gradient length".into()));
        }
        let delta = robust.iter().zip(&self.prev_robust).map(|(a, b)| a - b).collect();
        self.prev_robust = robust.to_vec();
        Ok(delta)
    }
}

/// `sum_j c_j (y_j + delta_j)` over self and neighbors.
pub fn tracking_update(terms: &[(&[f64], &[f64])], weights: &[f64]) -> Result<Vec<f64>> {
    let Some(&(first, _)) = terms.first() else {
        return Err(Error::EmptyInput("tracking terms"));
    };
    if weights.len() != terms.len() {
        return Err(Error::ShapeMismatch("one mixing weight per term".into()));
    }
    if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter("mixing weights must sum to 1".into()));
    }
    let dim = first.len();
    let mut out = vec![0.0; dim];
    for (&(y, d), &c) in terms.iter().zip(weights) {
        if y.len() != dim || d.len() != dim {
            return Err(Error::ShapeMismatch(format!("tracking vectors must have length {dim}")));
        }
        for k in 0..dim {
            out[k] += c * (y[k] + d[k]);
        }
    }
    Ok(out)
}

/// Synchronous gradient tracking on a fixed overlay with uniform mixing.
/// Used to study consensus separately from learning.
#[derive(Clone, Debug)]
pub struct RingTracker {
    pub neighbors: Vec<Vec<usize>>,
    pub trackers: Vec<TrackingVariable>,
}

impl RingTracker {
    pub fn new(neighbors: Vec<Vec<usize>>, dim: usize) -> Self {
        let trackers = vec![TrackingVariable::zeros(dim); neighbors.len()];
        RingTracker { neighbors, trackers }
    }

    pub fn ring(n: usize, dim: usize) -> Self {
        Self::new((0..n).map(|i| vec![(i + n - 1) % n, (i + 1) % n]).collect(), dim)
    }

    /// One round given each node's current gradient.
    pub fn step(&mut self, grads: &[Vec<f64>]) -> Result<()> {
        let deltas = self
            .trackers
            .iter_mut()
            .zip(grads)
            .map(|(t, g)| t.advance(g))
            .collect::<Result<Vec<_>>>()?;
        let old: Vec<Vec<f64>> = self.trackers.iter().map(|t| t.y.clone()).collect();
        for i in 0..self.trackers.len() {
            let mut terms: Vec<(&[f64], &[f64])> = vec![(&old[i], &deltas[i])];
            terms.extend(self.neighbors[i].iter().map(|&j| (old[j].as_slice(), deltas[j].as_slice())));
            let c = vec![1.0 / terms.len() as f64; terms.len()];
            self.trackers[i].y = tracking_update(&terms, &c)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_similarities() {
        let (tau, flagged) = detect_anomalies(&[0.9, 0.8, 0.85, -0.7, 0.88], 3.0).unwrap();
        assert!((tau - 0.70).abs() < 1e-12);
        assert_eq!(flagged, vec![3]);
        let (tau, flagged) = detect_anomalies(&[0.4; 4], 3.0).unwrap();
        assert_eq!(tau, 0.4);
        assert!(flagged.is_empty());
    }

    #[test]
    fn actor_mix_limits() {
        let own = [1.0, -2.0];
        let other = [3.0, 4.0];
        assert_eq!(actor_aggregate(&own, &[&other], &[1.0], 0.0).unwrap(), own.to_vec());
        let m = actor_aggregate(&own, &[&other], &[1.0], 0.3).unwrap();
        assert!((m[0] - 1.6).abs() < 1e-12 && (m[1] + 0.2).abs() < 1e-12);
        assert_eq!(actor_aggregate(&own, &[], &[], 0.3).unwrap(), own.to_vec());
    }

    #[test]
    fn weights_and_temperature() {
        let w = similarity_weights(&[0.9, 0.5, 0.95], 0.1).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let cold = similarity_weights(&[0.9, 0.5, 0.95], 1e-4).unwrap();
        assert!(cold[2] > 1.0 - 1e-9);
        assert!(similarity_weights(&[0.1], 0.0).is_err());
    }

    #[test]
    fn robust_gradient_cases() {
        let d = [1.0, -3.0];
        assert_eq!(robust_gradient(&d, &[]).unwrap(), d.to_vec());
        assert_eq!(robust_gradient(&d, &[&[-1.0, 3.0]]).unwrap(), vec![0.0, 0.0]);
        assert!(robust_gradient(&d, &[&[1.0]]).is_err());
    }

    #[test]
    fn tracking_fixed_point_and_checks() {
        let z = [0.0, 0.0];
        let y = tracking_update(&[(&z, &z), (&z, &z)], &[0.5, 0.5]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
        assert!(tracking_update(&[(&z, &z)], &[0.9]).is_err());
        assert!(tracking_update(&[(&z, &[0.0])], &[1.0]).is_err());
    }
}
