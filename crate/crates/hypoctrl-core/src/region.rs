//! Observation regions: membership predicates, thickness witnesses and the
//! geometric data needed by the Gram-matrix quadratures.

use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

/// A (delta, r) pair witnessing that every point of space lies within
/// distance delta of a ball of radius r contained in the region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThicknessWitness {
    pub delta: f64,
    pub r: f64,
}

/// Supported observation-region shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionSpec {
    /// {|x - center| > radius}
    ComplementOfBall { center: Vec<f64>, radius: f64 },
    /// Union of open balls (center, radius); overlaps are not supported by
    /// the Gram quadrature and are rejected there.
    UnionOfBalls { balls: Vec<(Vec<f64>, f64)> },
    /// {normal · x > offset}
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// Union of balls of the given radius centered at the points of the
    /// integer lattice scaled by `spacing`, in dimension `dim`.
    BallLattice { dim: usize, spacing: f64, radius: f64 },
}

impl RegionSpec {
    pub fn dim(&self) -> usize {
        match self {
            RegionSpec::ComplementOfBall { center, .. } => center.len(),
            RegionSpec::UnionOfBalls { balls } => {
                balls.first().map(|(c, _)| c.len()).unwrap_or(0)
            }
            RegionSpec::HalfSpace { normal, .. } => normal.len(),
            RegionSpec::BallLattice { dim, .. } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            RegionSpec::ComplementOfBall { center, radius } => {
                !center.is_empty() && *radius >= 0.0
            }
            RegionSpec::UnionOfBalls { balls } => {
                !balls.is_empty()
                    && balls.iter().all(|(c, r)| c.len() == self.dim() && *r > 0.0)
            }
            RegionSpec::HalfSpace { normal, .. } => {
                normal.iter().map(|v| v * v).sum::<f64>() > 0.0
            }
            RegionSpec::BallLattice { dim, spacing, radius } => {
                *dim > 0 && *spacing > 0.0 && *radius > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(CoreError::InvalidParameter("invalid region specification".into()))
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            RegionSpec::ComplementOfBall { center, radius } => {
                dist2(x, center) > radius * radius
            }
            RegionSpec::UnionOfBalls { balls } => {
                balls.iter().any(|(c, r)| dist2(x, c) < r * r)
            }
            RegionSpec::HalfSpace { normal, offset } => {
                x.iter().zip(normal).map(|(a, b)| a * b).sum::<f64>() > *offset
            }
            RegionSpec::BallLattice { spacing, radius, .. } => {
                x.iter()
                    .map(|&xi| {
                        let m = (xi / spacing).round() * spacing;
                        (xi - m) * (xi - m)
                    })
                    .sum::<f64>()
                    < radius * radius
            }
        }
    }

    /// Thickness witness when one exists. Bounded regions and half-spaces
    /// leave points arbitrarily far from the region, so only the ball
    /// complement and sufficiently dense lattices qualify.
    pub fn thickness_witness(&self) -> Option<ThicknessWitness> {
        match self {
            RegionSpec::ComplementOfBall { radius, .. } => {
                // a unit ball fits anywhere at distance radius + 1 from the center
                Some(ThicknessWitness { delta: radius + 1.0 + 1e-9, r: 1.0 })
            }
            RegionSpec::BallLattice { dim, spacing, radius } => {
                if *radius >= 0.5 * spacing {
                    None // balls overlap, still thick but witness below assumes r < spacing/2
                } else {
                    Some(ThicknessWitness {
                        delta: 0.5 * spacing * (*dim as f64).sqrt() + 1e-9,
                        r: *radius,
                    })
                }
            }
            _ => None,
        }
    }
}

fn dist2(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership() {
        let outside = RegionSpec::ComplementOfBall { center: vec![0.0], radius: 1.0 };
        assert!(outside.contains(&[1.5]));
        assert!(!outside.contains(&[0.5]));

        let half = RegionSpec::HalfSpace { normal: vec![1.0, 0.0], offset: 0.0 };
        assert!(half.contains(&[0.1, -3.0]));
        assert!(!half.contains(&[-0.1, 3.0]));

        let pair = RegionSpec::UnionOfBalls {
            balls: vec![(vec![-1.5], 0.5), (vec![1.5], 0.5)],
        };
        assert!(pair.contains(&[1.6]));
        assert!(!pair.contains(&[0.0]));

        let lattice = RegionSpec::BallLattice { dim: 2, spacing: 2.0, radius: 0.5 };
        assert!(lattice.contains(&[2.1, -0.2]));
        assert!(!lattice.contains(&[1.0, 1.0]));
    }

    #[test]
    fn witnesses() {
        let outside = RegionSpec::ComplementOfBall { center: vec![0.0, 0.0], radius: 1.0 };
        let w = outside.thickness_witness().unwrap();
        assert!(w.delta > 1.0 && w.r > 0.0);

        let lattice = RegionSpec::BallLattice { dim: 2, spacing: 2.0, radius: 0.5 };
        assert!(lattice.thickness_witness().is_some());

        let half = RegionSpec::HalfSpace { normal: vec![1.0], offset: 0.0 };
        assert!(half.thickness_witness().is_none());
    }

    #[test]
    fn serde_round_trip() {
        let r = RegionSpec::UnionOfBalls { balls: vec![(vec![1.0, 2.0], 0.3)] };
        let s = serde_json::to_string(&r).unwrap();
        let back: RegionSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
