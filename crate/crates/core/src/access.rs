//! Access class barring: per-channel pass probabilities and the barring draw.
//!
//! After Msg1 the base station knows how many devices `n` picked each channel.
//! Devices alone on their channel always continue; contenders on a shared
//! channel each draw `q ~ U[0, 1)` and continue iff `q <= p_acb`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::traffic::binomial;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AcbPolicy {
    /// No barring round: two-step grant-free access.
    GrantFree,
    /// Constant pass probability for contended channels.
    Static(f64),
    /// Each of `n` contenders passes with probability `1/n`.
    OptimalInverse,
    /// Each of `n` contenders passes with probability `1 - 1/n`.
    OptimalLiteral,
}

impl AcbPolicy {
    pub fn validate(&self) -> Result<()> {
        if let AcbPolicy::Static(p) = self {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::config("acb", format!("static factor {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn is_grant_free(&self) -> bool {
        matches!(self, AcbPolicy::GrantFree)
    }
}

impl fmt::Display for AcbPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AcbPolicy::GrantFree => f.write_str("gf"),
            AcbPolicy::Static(p) => write!(f, "static:{p}"),
            AcbPolicy::OptimalInverse => f.write_str("opt-inv"),
            AcbPolicy::OptimalLiteral => f.write_str("opt-lit"),
        }
    }
}

impl FromStr for AcbPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let policy = match s.trim() {
            "gf" => AcbPolicy::GrantFree,
            "opt-inv" => AcbPolicy::OptimalInverse,
            "opt-lit" => AcbPolicy::OptimalLiteral,
            other => match other.strip_prefix("static:") {
                Some(p) => {
                    let p: f64 = p
                        .parse()
                        .map_err(|_| Error::config("acb", format!("bad static factor `{p}`")))?;
                    AcbPolicy::Static(p)
                }
                None => {
                    return Err(Error::config(
                        "acb",
                        format!("unknown policy `{other}` (gf | static:<p> | opt-inv | opt-lit)"),
                    ))
                }
            },
        };
        policy.validate()?;
        Ok(policy)
    }
}

impl Serialize for AcbPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AcbPolicy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Devices that picked channel `channel` in Msg1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ChannelAccessCount {
    pub channel: usize,
    pub n: u64,
}

/// Probability that a single contender on a channel with `n` contenders continues.
pub fn acb_factor(policy: AcbPolicy, n: u64) -> f64 {
    if n <= 1 {
        return 1.0;
    }
    match policy {
        AcbPolicy::GrantFree => 1.0,
        AcbPolicy::Static(p) => p,
        AcbPolicy::OptimalInverse => 1.0 / n as f64,
        AcbPolicy::OptimalLiteral => 1.0 - 1.0 / n as f64,
    }
}

/// Number of the `n` contenders that pass an independent barring draw each.
pub fn acb_round<R: Rng + ?Sized>(n: u64, pass_prob: f64, rng: &mut R) -> u64 {
    binomial(n, pass_prob, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn literal_factor_for_pair() {
        assert_eq!(acb_factor(AcbPolicy::OptimalLiteral, 2), 0.5);
    }

    #[test]
    fn singletons_always_pass() {
        for p in [
            AcbPolicy::GrantFree,
            AcbPolicy::Static(0.2),
            AcbPolicy::OptimalInverse,
            AcbPolicy::OptimalLiteral,
        ] {
            assert_eq!(acb_factor(p, 1), 1.0);
            assert_eq!(acb_factor(p, 0), 1.0);
        }
    }

    #[test]
    fn inverse_factor() {
        assert_eq!(acb_factor(AcbPolicy::OptimalInverse, 4), 0.25);
        assert_eq!(acb_factor(AcbPolicy::Static(0.4), 7), 0.4);
        assert_eq!(acb_factor(AcbPolicy::GrantFree, 9), 1.0);
    }

    #[test]
    fn round_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(acb_round(5, 1.0, &mut rng), 5);
        assert_eq!(acb_round(5, 0.0, &mut rng), 0);
        assert_eq!(acb_round(0, 0.5, &mut rng), 0);
    }

    #[test]
    fn exactly_one_survivor_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let trials = 100_000;
        let hits = (0..trials).filter(|_| acb_round(10, 0.1, &mut rng) == 1).count();
        let p = 10.0 * 0.1 * 0.9f64.powi(9);
        let freq = hits as f64 / trials as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * se, "{freq} vs {p}");
        assert!((p - 0.387).abs() < 1e-3);
    }

    #[test]
    fn parse_policies() {
        assert_eq!("gf".parse::<AcbPolicy>().unwrap(), AcbPolicy::GrantFree);
        assert_eq!("opt-inv".parse::<AcbPolicy>().unwrap(), AcbPolicy::OptimalInverse);
        assert_eq!("opt-lit".parse::<AcbPolicy>().unwrap(), AcbPolicy::OptimalLiteral);
        assert_eq!("static:0.4".parse::<AcbPolicy>().unwrap(), AcbPolicy::Static(0.4));
        assert!("static:1.4".parse::<AcbPolicy>().is_err());
        assert!("static:x".parse::<AcbPolicy>().is_err());
        assert!("aloha".parse::<AcbPolicy>().is_err());
        for p in ["gf", "opt-inv", "opt-lit", "static:0.6"] {
            assert_eq!(p.parse::<AcbPolicy>().unwrap().to_string(), p);
        }
    }
}
