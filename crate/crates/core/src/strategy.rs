//! Pirate coalitions and their forgery strategies.
//!
//! A coalition only ever sees the symbols of its own active members. Whatever
//! the strategy picks, a column on which every active member agrees is
//! forwarded unchanged (the marking assumption).

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    /// Output the symbol of a uniformly random active member.
    Interleaving,
    /// Output one designated member's symbol until that member is caught.
    Scapegoat,
    Majority,
    Minority,
    /// Uniform bit wherever the members disagree.
    CoinFlip,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Interleaving,
        StrategyKind::Scapegoat,
        StrategyKind::Majority,
        StrategyKind::Minority,
        StrategyKind::CoinFlip,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Interleaving => "interleaving",
            StrategyKind::Scapegoat => "scapegoat",
            StrategyKind::Majority => "majority",
            StrategyKind::Minority => "minority",
            StrategyKind::CoinFlip => "coin-flip",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                format!("unknown strategy `{s}` (expected interleaving, scapegoat, majority, minority or coin-flip)")
            })
    }
}

#[derive(Debug, Clone)]
pub struct Coalition {
    members: Vec<u64>,
    active: Vec<u64>,
    kind: StrategyKind,
    scapegoat: Option<u64>,
    rng: StreamRng,
}

impl Coalition {
    /// Duplicate members are collapsed; order is otherwise kept.
    pub fn new(members: Vec<u64>, kind: StrategyKind, mut rng: StreamRng) -> Self {
        let mut seen = std::collections::HashSet::new();
        let members: Vec<u64> = members.into_iter().filter(|u| seen.insert(*u)).collect();
        let scapegoat = match kind {
            StrategyKind::Scapegoat if !members.is_empty() => {
                Some(members[rng.gen_range(0..members.len())])
            }
            _ => None,
        };
        Coalition {
            active: members.clone(),
            members,
            kind,
            scapegoat,
            rng,
        }
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn members(&self) -> &[u64] {
        &self.members
    }

    /// Members still contributing to forgeries.
    pub fn active(&self) -> &[u64] {
        &self.active
    }

    pub fn is_active(&self) -> bool {
        !self.active.is_empty()
    }

    pub fn scapegoat(&self) -> Option<u64> {
        self.scapegoat
    }

    /// Forges one symbol from the active members' symbols, given in the
    /// order of [`Coalition::active`].
    pub fn forge(&mut self, bits: &[bool]) -> Result<bool> {
        let k = self.active.len();
        if k == 0 {
            return Err(Error::EmptyCoalition);
        }
        if bits.len() != k {
            return Err(Error::LengthMismatch {
                expected: k,
                got: bits.len(),
            });
        }
        let ones = bits.iter().filter(|&&b| b).count();
        let pick = match self.kind {
            StrategyKind::Interleaving => bits[self.rng.gen_range(0..k)],
            StrategyKind::Scapegoat => {
                let goat = self.scapegoat.expect("scapegoat set while active");
                let at = self.active.iter().position(|&u| u == goat).expect("scapegoat is active");
                bits[at]
            }
            StrategyKind::Majority => match (2 * ones).cmp(&k) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => self.rng.gen(),
            },
            StrategyKind::Minority => match (2 * ones).cmp(&k) {
                std::cmp::Ordering::Greater => false,
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Equal => self.rng.gen(),
            },
            StrategyKind::CoinFlip => self.rng.gen(),
        };
        Ok(match ones {
            0 => false,
            o if o == k => true,
            _ => pick,
        })
    }

    pub fn on_disconnect(&mut self, user: u64) -> Result<()> {
        let at = self
            .active
            .iter()
            .position(|&u| u == user)
            .ok_or(Error::UnknownUser(user))?;
        self.active.remove(at);
        if self.scapegoat == Some(user) {
            self.scapegoat = if self.active.is_empty() {
                None
            } else {
                Some(self.active[self.rng.gen_range(0..self.active.len())])
            };
        }
        Ok(())
    }
}

/// A coalition whose disconnections take effect `delay` positions late.
///
/// A disconnection decided after scoring position `i0` removes the member
/// from forging only from position `i0 + delay + 1` on, so the member still
/// feeds positions `i0 + 1 ..= i0 + delay`. With `delay = 0` this behaves
/// exactly like the bare coalition.
#[derive(Debug, Clone)]
pub struct DelayedCoalition {
    inner: Coalition,
    delay: u32,
    pending: VecDeque<(u64, u64)>,
}

impl DelayedCoalition {
    pub fn new(inner: Coalition, delay: u32) -> Self {
        DelayedCoalition {
            inner,
            delay,
            pending: VecDeque::new(),
        }
    }

    pub fn delay(&self) -> u32 {
        self.delay
    }

    pub fn inner(&self) -> &Coalition {
        &self.inner
    }

    /// Applies every disconnection due at or before `position`.
    pub fn advance_to(&mut self, position: u64) -> Result<()> {
        while let Some(&(due, user)) = self.pending.front() {
            if due > position {
                break;
            }
            self.pending.pop_front();
            self.inner.on_disconnect(user)?;
        }
        Ok(())
    }

    pub fn active(&self) -> &[u64] {
        self.inner.active()
    }

    /// True while some member may still forge, now or after pending removals.
    pub fn is_active(&self) -> bool {
        self.inner.is_active()
    }

    pub fn forge(&mut self, bits: &[bool]) -> Result<bool> {
        self.inner.forge(bits)
    }

    /// Records that `user` was disconnected on the basis of `position`.
    pub fn schedule_disconnect(&mut self, user: u64, position: u64) -> Result<()> {
        if !self.inner.active().contains(&user) || self.pending.iter().any(|&(_, u)| u == user) {
            return Err(Error::UnknownUser(user));
        }
        self.pending.push_back((position + self.delay as u64 + 1, user));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Tag;

    fn coalition(kind: StrategyKind, k: u64, seed: u64) -> Coalition {
        Coalition::new((0..k).collect(), kind, StreamRng::new(seed, Tag::Coalition, 0, 0))
    }

    #[test]
    fn unanimous_columns_pass_through() {
        for kind in StrategyKind::ALL {
            let mut c = coalition(kind, 4, 1);
            for _ in 0..100 {
                assert!(c.forge(&[true; 4]).unwrap());
                assert!(!c.forge(&[false; 4]).unwrap());
            }
        }
    }

    #[test]
    fn scapegoat_outputs_its_own_bit() {
        let mut c = coalition(StrategyKind::Scapegoat, 3, 2);
        let goat = c.scapegoat().unwrap();
        let bits: Vec<bool> = c.active().iter().map(|&u| u != goat).collect();
        for _ in 0..50 {
            assert!(!c.forge(&bits).unwrap());
        }
    }

    #[test]
    fn majority_and_interleaving_frequencies() {
        let mut maj = coalition(StrategyKind::Majority, 3, 3);
        let mut inter = coalition(StrategyKind::Interleaving, 3, 4);
        let reps = 10_000;
        let mut ones = 0;
        for _ in 0..reps {
            assert!(maj.forge(&[true, true, false]).unwrap());
            ones += inter.forge(&[true, true, false]).unwrap() as u32;
        }
        let freq = ones as f64 / reps as f64;
        assert!((freq - 2.0 / 3.0).abs() <= 0.02, "{freq}");
    }

    #[test]
    fn minority_picks_rare_bit() {
        let mut c = coalition(StrategyKind::Minority, 3, 5);
        for _ in 0..100 {
            assert!(!c.forge(&[true, true, false]).unwrap());
        }
    }

    #[test]
    fn disconnect_rules() {
        let mut c = coalition(StrategyKind::Scapegoat, 4, 6);
        let goat = c.scapegoat().unwrap();
        let other = *c.active().iter().find(|&&u| u != goat).unwrap();
        c.on_disconnect(other).unwrap();
        assert_eq!(c.scapegoat(), Some(goat));
        c.on_disconnect(goat).unwrap();
        let new = c.scapegoat().unwrap();
        assert!(c.active().contains(&new));
        assert_eq!(c.active().len(), 2);
        assert!(matches!(c.on_disconnect(goat), Err(Error::UnknownUser(_))));
        for u in c.active().to_vec() {
            c.on_disconnect(u).unwrap();
        }
        assert!(!c.is_active());
        assert!(matches!(c.forge(&[]), Err(Error::EmptyCoalition)));
    }

    #[test]
    fn delayed_removal_lags() {
        let mut d = DelayedCoalition::new(coalition(StrategyKind::Interleaving, 2, 7), 8);
        d.schedule_disconnect(0, 100).unwrap();
        for i in 101..=108 {
            d.advance_to(i).unwrap();
            assert_eq!(d.active(), &[0, 1]);
        }
        d.advance_to(109).unwrap();
        assert_eq!(d.active(), &[1]);
    }

    #[test]
    fn parse_names() {
        for k in StrategyKind::ALL {
            assert_eq!(k.as_str().parse::<StrategyKind>().unwrap(), k);
        }
        assert!("random".parse::<StrategyKind>().is_err());
    }
}
