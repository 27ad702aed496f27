//! Four-slot model where measuring A or D flips and locks its partner.

use serde::{Deserialize, Serialize};

use super::{HiddenState, HvDistribution, HvModel};
use crate::error::{Error, Result};
use crate::sequence::Outcome;

pub const LOCKING_LABELS: [&str; 4] = ["A", "B", "C", "D"];

/// One slot of the hidden state: a sign, possibly locked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
    #[serde(rename = "⊕")]
    LockedPlus,
    #[serde(rename = "⊖")]
    LockedMinus,
}

impl Slot {
    pub fn sign(self) -> Outcome {
        match self {
            Slot::Plus | Slot::LockedPlus => Outcome::Plus,
            Slot::Minus | Slot::LockedMinus => Outcome::Minus,
        }
    }

    pub fn is_locked(self) -> bool {
        matches!(self, Slot::LockedPlus | Slot::LockedMinus)
    }

    fn locked(sign: Outcome) -> Self {
        match sign {
            Outcome::Plus => Slot::LockedPlus,
            Outcome::Minus => Slot::LockedMinus,
        }
    }

    fn unlocked(sign: Outcome) -> Self {
        match sign {
            Outcome::Plus => Slot::Plus,
            Outcome::Minus => Slot::Minus,
        }
    }
}

/// Slots for A, B, C, D in that order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockingState {
    pub slots: [Slot; 4],
}

impl LockingState {
    pub fn uniform(sign: Outcome) -> Self {
        Self { slots: [Slot::unlocked(sign); 4] }
    }

    /// Parses four slot symbols such as `"+-⊕⊖"`.
    pub fn parse(text: &str) -> Result<Self> {
        let slots: Vec<Slot> = text
            .chars()
            .map(|c| match c {
                '+' => Ok(Slot::Plus),
                '-' | '−' => Ok(Slot::Minus),
                '⊕' => Ok(Slot::LockedPlus),
                '⊖' => Ok(Slot::LockedMinus),
                other => Err(Error::InvalidParameter(format!("bad slot symbol `{other}`"))),
            })
            .collect::<Result<_>>()?;
        let slots: [Slot; 4] =
            slots.try_into().map_err(|_| Error::InvalidParameter(format!("locking state `{text}` needs four slots")))?;
        Ok(Self { slots })
    }

    pub fn slot(&self, label: &str) -> Result<Slot> {
        Ok(self.slots[slot_index(label)?])
    }
}

fn slot_index(label: &str) -> Result<usize> {
    LOCKING_LABELS.iter().position(|l| *l == label).ok_or_else(|| Error::UnknownLabel(label.to_string()))
}

/// Reports the slot, locks it, and for A or D flips and locks the partner unless it is locked.
pub fn locking_measure(state: &LockingState, label: &str) -> Result<(Outcome, LockingState)> {
    let i = slot_index(label)?;
    let mut next = *state;
    let v = state.slots[i].sign();
    next.slots[i] = Slot::locked(v);
    let partner = match label {
        "A" => Some(3),
        "D" => Some(0),
        _ => None,
    };
    if let Some(j) = partner {
        if !next.slots[j].is_locked() {
            next.slots[j] = Slot::locked(next.slots[j].sign().flipped());
        }
    }
    Ok((v, next))
}

/// Probability 1/2 each of all slots `+` or all slots `−`.
pub fn locking_initial_distribution() -> HvDistribution {
    HvDistribution::finite(
        "locking_two_point",
        vec![
            (HiddenState::Locking(LockingState::uniform(Outcome::Plus)), 0.5),
            (HiddenState::Locking(LockingState::uniform(Outcome::Minus)), 0.5),
        ],
    )
    .expect("weights sum to one")
}

#[derive(Debug, Clone, Default)]
pub struct LockingModel;

impl HvModel for LockingModel {
    fn id(&self) -> &str {
        "locking"
    }

    fn labels(&self) -> Vec<String> {
        LOCKING_LABELS.iter().map(|s| s.to_string()).collect()
    }

    fn measure(&self, hidden: &mut HiddenState, label: &str) -> Result<Outcome> {
        let HiddenState::Locking(s) = hidden else {
            return Err(Error::InvalidDistribution("locking model needs a locking state".into()));
        };
        let (v, next) = locking_measure(s, label)?;
        *s = next;
        Ok(v)
    }
}
