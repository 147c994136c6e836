//! Token-by-token decode cache simulator.
//!
//! Each decode step appends one token. The token-side cache holds key and
//! value rows per layer; the depth side holds the layer states of the token
//! being decoded that some later depth read still needs. The plain residual
//! stream (one activation handed from block to block) is the baseline and is
//! not counted.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::attention::Window;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum DecodeMixer {
    /// Full causal attention: the cache keeps the whole prefix.
    Standard,
    SeqShortswa {
        w: Window,
    },
    /// Full token-side cache plus a depth window over each token's layer states.
    DepthAttn {
        k: Window,
    },
    /// Static aggregation over every earlier layer state.
    Elc,
    Denseformer,
}

impl DecodeMixer {
    pub fn tag(&self) -> &'static str {
        match self {
            DecodeMixer::Standard => "standard",
            DecodeMixer::SeqShortswa { .. } => "seq_shortswa",
            DecodeMixer::DepthAttn { .. } => "depth_attn",
            DecodeMixer::Elc => "elc",
            DecodeMixer::Denseformer => "denseformer",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            DecodeMixer::SeqShortswa { w } => w.validate("w").map(drop),
            DecodeMixer::DepthAttn { k } => k.validate("K").map(drop),
            _ => Ok(()),
        }
    }

    fn token_rows(&self, step: usize) -> usize {
        match *self {
            DecodeMixer::SeqShortswa { w } => w.span(step),
            _ => step + 1,
        }
    }

    /// Earlier-layer states the read at block `l` consumes.
    fn depth_needs(&self, l: usize) -> std::ops::RangeInclusive<usize> {
        match *self {
            DecodeMixer::DepthAttn { k } => k.start(l)..=l,
            DecodeMixer::Elc | DecodeMixer::Denseformer => 0..=l,
            #[allow(clippy::reversed_empty_ranges)]
            _ => 1..=0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeStep {
    pub step: usize,
    pub token_rows_per_layer: usize,
    pub token_scalars: u64,
    /// Sum over blocks of the depth window each read consumes.
    pub depth_window_obligations: usize,
    /// Largest number of layer states held at once while the token is in flight.
    pub depth_states_resident: usize,
    pub depth_scalars: u64,
    pub total_scalars: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub token_scalars: u64,
    pub depth_scalars: u64,
    pub total_scalars: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerPeaks {
    pub token_rows_per_layer: usize,
    pub token_scalars: u64,
    pub depth_window_obligations: usize,
    pub depth_states_resident: usize,
    pub depth_scalars: u64,
    pub total_scalars: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheLedger {
    pub mixer: DecodeMixer,
    #[serde(rename = "L")]
    pub blocks: usize,
    pub d: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub steps: Vec<DecodeStep>,
    /// Sums of the per-step entries.
    pub totals: LedgerTotals,
    pub peak: LedgerPeaks,
}

impl CacheLedger {
    pub fn step(&self, t: usize) -> Option<&DecodeStep> {
        self.steps.get(t)
    }

    pub fn peak_bytes(&self, bytes_per_scalar: u64) -> u64 {
        self.peak.total_scalars * bytes_per_scalar
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "step,token_rows_per_layer,token_scalars,depth_window_obligations,depth_states_resident,depth_scalars,total_scalars\n",
        );
        for e in &self.steps {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.step,
                e.token_rows_per_layer,
                e.token_scalars,
                e.depth_window_obligations,
                e.depth_states_resident,
                e.depth_scalars,
                e.total_scalars
            ));
        }
        s
    }
}

/// Walks one token through `L` blocks and returns
/// `(Σ window sizes, peak resident states)`.
fn depth_pass(mixer: DecodeMixer, blocks: usize) -> (usize, usize) {
    let mut resident = BTreeSet::new();
    let (mut obligations, mut peak) = (0, 0);
    for l in 0..blocks {
        // the state entering block l is now available
        resident.insert(l);
        let needs = mixer.depth_needs(l);
        obligations += needs.clone().count();
        let live: BTreeSet<usize> = resident
            .iter()
            .copied()
            .filter(|&j| (l..blocks).any(|m| mixer.depth_needs(m).contains(&j)))
            .collect();
        peak = peak.max(live.len());
        resident = live;
    }
    (obligations, peak)
}

pub fn simulate_decode(
    mixer: DecodeMixer,
    blocks: usize,
    d: usize,
    dk: usize,
    dv: usize,
    steps: usize,
) -> Result<CacheLedger> {
    mixer.validate()?;
    for (name, v) in [
        ("L", blocks),
        ("d", d),
        ("d_k", dk),
        ("d_v", dv),
        ("steps", steps),
    ] {
        if v == 0 {
            return Err(Error::param(name, "must be at least 1"));
        }
    }
    let (obligations, resident) = depth_pass(mixer, blocks);
    let depth_scalars = (resident * d) as u64;
    let entries: Vec<DecodeStep> = (0..steps)
        .map(|t| {
            let rows = mixer.token_rows(t);
            let token_scalars = (blocks * rows * (dk + dv)) as u64;
            DecodeStep {
                step: t,
                token_rows_per_layer: rows,
                token_scalars,
                depth_window_obligations: obligations,
                depth_states_resident: resident,
                depth_scalars,
                total_scalars: token_scalars + depth_scalars,
            }
        })
        .collect();
    let mut totals = LedgerTotals::default();
    let mut peak = LedgerPeaks::default();
    for e in &entries {
        totals.token_scalars += e.token_scalars;
        totals.depth_scalars += e.depth_scalars;
        totals.total_scalars += e.total_scalars;
        peak.token_rows_per_layer = peak.token_rows_per_layer.max(e.token_rows_per_layer);
        peak.token_scalars = peak.token_scalars.max(e.token_scalars);
        peak.depth_window_obligations = peak
            .depth_window_obligations
            .max(e.depth_window_obligations);
        peak.depth_states_resident = peak.depth_states_resident.max(e.depth_states_resident);
        peak.depth_scalars = peak.depth_scalars.max(e.depth_scalars);
        peak.total_scalars = peak.total_scalars.max(e.total_scalars);
    }
    Ok(CacheLedger {
        mixer,
        blocks,
        d,
        d_k: dk,
        d_v: dv,
        steps: entries,
        totals,
        peak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_attention_grows_with_step() {
        let l = simulate_decode(DecodeMixer::Standard, 2, 4, 4, 4, 50).unwrap();
        for (t, e) in l.steps.iter().enumerate() {
            assert_eq!(e.token_rows_per_layer, t + 1);
            assert_eq!(e.depth_scalars, 0);
        }
    }

    #[test]
    fn window_caps_rows() {
        let l = simulate_decode(
            DecodeMixer::SeqShortswa {
                w: Window::Finite(4),
            },
            2,
            4,
            4,
            4,
            101,
        )
        .unwrap();
        assert_eq!(l.step(100).unwrap().token_rows_per_layer, 4);
        assert_eq!(l.step(2).unwrap().token_rows_per_layer, 3);
        assert_eq!(l.peak.token_rows_per_layer, 4);
    }

    #[test]
    fn depth_window_enumeration() {
        // windows at l = 0..7 with K = 3: {0} {0,1} {0,1,2} {1,2,3} ... {5,6,7}
        let mut obligations = 0;
        for l in 0..8usize {
            let lo = l.saturating_sub(2);
            obligations += (lo..=l).count();
        }
        assert_eq!(obligations, 21);
        let led = simulate_decode(
            DecodeMixer::DepthAttn {
                k: Window::Finite(3),
            },
            8,
            4,
            4,
            4,
            3,
        )
        .unwrap();
        assert_eq!(led.peak.depth_window_obligations, obligations);
        assert_eq!(led.peak.depth_states_resident, 3);
        assert_eq!(led.peak.depth_scalars, 12);
    }

    #[test]
    fn static_aggregators_keep_everything() {
        let led = simulate_decode(DecodeMixer::Elc, 5, 2, 2, 2, 1).unwrap();
        assert_eq!(led.peak.depth_states_resident, 5);
        assert_eq!(led.peak.depth_window_obligations, 15);
    }

    #[test]
    fn totals_are_sums() {
        let l = simulate_decode(DecodeMixer::DepthAttn { k: Window::Full }, 3, 4, 2, 3, 7).unwrap();
        let s: u64 = l.steps.iter().map(|e| e.total_scalars).sum();
        assert_eq!(l.totals.total_scalars, s);
    }

    #[test]
    fn rejects_zero() {
        assert!(simulate_decode(DecodeMixer::Standard, 2, 4, 4, 4, 0).is_err());
        assert!(simulate_decode(
            DecodeMixer::SeqShortswa {
                w: Window::Finite(0)
            },
            2,
            4,
            4,
            4,
            1
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn peaks_monotone(w in 1usize..12, k in 1usize..10, l in 1usize..10, steps in 1usize..40) {
            let a = simulate_decode(DecodeMixer::SeqShortswa { w: Window::Finite(w) }, l, 4, 4, 4, steps).unwrap();
            let b = simulate_decode(DecodeMixer::SeqShortswa { w: Window::Finite(w + 1) }, l, 4, 4, 4, steps).unwrap();
            let c = simulate_decode(DecodeMixer::SeqShortswa { w: Window::Finite(w) }, l, 4, 4, 4, steps + 1).unwrap();
            prop_assert!(a.peak.total_scalars <= b.peak.total_scalars);
            prop_assert!(a.peak.total_scalars <= c.peak.total_scalars);
            let p = simulate_decode(DecodeMixer::DepthAttn { k: Window::Finite(k) }, l, 4, 4, 4, steps).unwrap();
            let q = simulate_decode(DecodeMixer::DepthAttn { k: Window::Finite(k + 1) }, l, 4, 4, 4, steps).unwrap();
            prop_assert!(p.peak.depth_states_resident <= q.peak.depth_states_resident);
            prop_assert!(p.peak.depth_window_obligations <= q.peak.depth_window_obligations);
            prop_assert_eq!(p.peak.depth_states_resident, k.min(l));
        }
    }
}
