//! JSON representation of markets and matchings (1-based ids).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{ArmPreferences, Bounds, MarketInstance, Matching};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketFile {
    pub n_players: usize,
    pub n_arms: usize,
    pub dim: usize,
    pub arm_prefs: Vec<Vec<usize>>,
    pub theta: Vec<Vec<f64>>,
    pub bounds: Bounds,
}

impl TryFrom<MarketFile> for MarketInstance {
    type Error = Error;

    fn try_from(f: MarketFile) -> Result<Self> {
        if f.theta.len() != f.n_players {
            return Err(Error::DimensionMismatch {
                what: "theta rows",
                expected: f.n_players,
                found: f.theta.len(),
            });
        }
        if f.arm_prefs.len() != f.n_arms {
            return Err(Error::DimensionMismatch {
                what: "arm_prefs rows",
                expected: f.n_arms,
                found: f.arm_prefs.len(),
            });
        }
        let orders = f
            .arm_prefs
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&id| {
                        id.checked_sub(1)
                            .ok_or_else(|| Error::Parse("player ids are 1-based".into()))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let prefs = ArmPreferences::new(f.n_players, orders)?;
        let theta: Vec<DVector<f64>> = f
            .theta
            .iter()
            .map(|t| DVector::from_column_slice(t))
            .collect();
        let m = MarketInstance::new(prefs, theta, f.bounds)?;
        if m.dim != f.dim {
            return Err(Error::DimensionMismatch {
                what: "theta",
                expected: f.dim,
                found: m.dim,
            });
        }
        Ok(m)
    }
}

impl From<&MarketInstance> for MarketFile {
    fn from(m: &MarketInstance) -> Self {
        MarketFile {
            n_players: m.n_players,
            n_arms: m.n_arms,
            dim: m.dim,
            arm_prefs: (0..m.n_arms)
                .map(|a| m.arm_prefs.order(a).iter().map(|p| p + 1).collect())
                .collect(),
            theta: m
                .theta
                .iter()
                .map(|t| t.iter().copied().collect())
                .collect(),
            bounds: m.bounds,
        }
    }
}

impl MarketInstance {
    pub fn from_json(s: &str) -> Result<Self> {
        let f: MarketFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        f.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&MarketFile::from(self)).expect("market serializes")
    }
}

/// A matching as a list of 1-based arm ids per player, `-1` when unmatched.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatchingIds(pub Vec<i64>);

impl From<&Matching> for MatchingIds {
    fn from(m: &Matching) -> Self {
        MatchingIds(
            m.assignment()
                .iter()
                .map(|a| a.map_or(-1, |a| a as i64 + 1))
                .collect(),
        )
    }
}

impl MatchingIds {
    pub fn to_matching(&self, n_arms: usize) -> Result<Matching> {
        let assignment = self
            .0
            .iter()
            .map(|&id| match id {
                -1 => Ok(None),
                id if id >= 1 => Ok(Some(id as usize - 1)),
                id => Err(Error::Parse(format!("invalid arm id {id}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Matching::new(n_arms, assignment)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MARKET: &str = r#"{
        "n_players": 2, "n_arms": 3, "dim": 2,
        "arm_prefs": [[2, 1], [1, 2], [1, 2]],
        "theta": [[0.3, 0.1], [0.2, 0.2]],
        "bounds": {"b_x": 1.0, "b_theta": 0.5, "noise_r": 0.1}
    }"#;

    #[test]
    fn market_round_trip() {
        let m = MarketInstance::from_json(MARKET).unwrap();
        assert!(m.arm_prefs.prefers(0, 1, 0));
        let again = MarketInstance::from_json(&m.to_json()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let bad = MARKET.replacen("\"dim\": 2,", "\"dim\": 2, \"extra\": 1,", 1);
        assert!(matches!(
            MarketInstance::from_json(&bad),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn zero_based_prefs_are_rejected() {
        let bad = MARKET.replacen("[[2, 1]", "[[0, 1]", 1);
        assert!(MarketInstance::from_json(&bad).is_err());
    }

    #[test]
    fn matching_ids_round_trip() {
        let m = Matching::new(3, vec![Some(2), None]).unwrap();
        let ids = MatchingIds::from(&m);
        assert_eq!(serde_json::to_string(&ids).unwrap(), "[3,-1]");
        assert_eq!(ids.to_matching(3).unwrap(), m);
    }
}
