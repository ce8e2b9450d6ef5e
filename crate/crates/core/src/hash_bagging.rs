//! Hash-based subsampling.
//!
//! Sub-trainset `g` belongs to trainset-hash pair `g / g_hat` and holds the
//! samples whose keyed hash (keyed by the pair index) is `g % g_hat` modulo
//! `g_hat`, with `g_hat = N / K`. Each pair therefore partitions the
//! trainset into `g_hat` disjoint pieces, which bounds how many
//! sub-trainsets one poisoned sample can reach.
//!
//! Hash family: FNV-1a 64 over `pair_index.to_le_bytes() ++ payload`,
//! passed through the MurmurHash3 64-bit finalizer. FNV-1a alone leaves the
//! low bits nearly linear in the input bytes, which is what `% g_hat` reads.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{CertError, Result};

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a_extend(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Plain FNV-1a 64 of `bytes`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a_extend(FNV_OFFSET_BASIS, bytes)
}

fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^ (k >> 33)
}

/// Keyed hash of one record for one trainset-hash pair.
pub fn canonical_hash(payload: &[u8], pair_index: u64) -> u64 {
    let keyed = fnv1a_extend(FNV_OFFSET_BASIS, &pair_index.to_le_bytes());
    fmix64(fnv1a_extend(keyed, payload))
}

/// One training sample, hashed as the exact bytes it was ingested with.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleRecord {
    pub index: usize,
    pub payload: Vec<u8>,
}

impl SampleRecord {
    pub fn new(index: usize, payload: impl Into<Vec<u8>>) -> Self {
        Self {
            index,
            payload: payload.into(),
        }
    }
}

/// Builds records from lines, without their line terminators.
pub fn records_from_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> Vec<SampleRecord> {
    lines
        .into_iter()
        .enumerate()
        .map(|(i, line)| SampleRecord::new(i, line.as_bytes()))
        .collect()
}

/// How `G` classifiers are grouped into trainset-hash pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PairStructure {
    num_classifiers: usize,
    g_hat: usize,
}

impl PairStructure {
    pub fn new(num_classifiers: usize, g_hat: usize) -> Result<Self> {
        if g_hat == 0 {
            return Err(CertError::InvalidArgument(
                "g_hat must be at least 1".into(),
            ));
        }
        Ok(Self {
            num_classifiers,
            g_hat,
        })
    }

    /// `g_hat = floor(N / K)`.
    pub fn for_trainset(num_classifiers: usize, n: usize, k: usize) -> Result<Self> {
        if k > n {
            return Err(CertError::InvalidArgument(format!(
                "K > N: sub-trainset size K={k}, trainset size N={n}"
            )));
        }
        if k == 0 {
            return Err(CertError::InvalidArgument(
                "sub-trainset size K must be at least 1".into(),
            ));
        }
        Self::new(num_classifiers, n / k)
    }

    /// A single pair holding every classifier.
    pub fn single(num_classifiers: usize) -> Self {
        Self {
            num_classifiers,
            g_hat: num_classifiers.max(1),
        }
    }

    pub fn num_classifiers(&self) -> usize {
        self.num_classifiers
    }

    pub fn g_hat(&self) -> usize {
        self.g_hat
    }

    pub fn num_pairs(&self) -> usize {
        self.num_classifiers.div_ceil(self.g_hat)
    }

    pub fn pair_of(&self, g: usize) -> usize {
        g / self.g_hat
    }

    pub fn slot_of(&self, g: usize) -> usize {
        g % self.g_hat
    }

    /// Classifier range of pair `pair`; the last one is truncated at `G`.
    pub fn pair_range(&self, pair: usize) -> std::ops::Range<usize> {
        let start = pair * self.g_hat;
        start.min(self.num_classifiers)..((pair + 1) * self.g_hat).min(self.num_classifiers)
    }

    pub fn pair_ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..self.num_pairs()).map(|l| self.pair_range(l))
    }
}

/// Sub-trainset membership of every training sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Membership {
    num_classifiers: usize,
    sets: Vec<Vec<usize>>,
    pair_structure: Option<PairStructure>,
}

#[derive(Serialize, Deserialize)]
struct MembershipJson {
    #[serde(rename = "G")]
    num_classifiers: usize,
    g_hat: Option<usize>,
    num_pairs: Option<usize>,
    sets: Vec<Vec<usize>>,
}

impl Membership {
    /// Arbitrary (vanilla bagging) membership. Each set is sorted and
    /// deduplicated.
    pub fn vanilla(num_classifiers: usize, sets: Vec<Vec<usize>>) -> Result<Self> {
        Self::build(num_classifiers, sets, None)
    }

    pub fn with_pairs(sets: Vec<Vec<usize>>, pairs: PairStructure) -> Result<Self> {
        Self::build(pairs.num_classifiers(), sets, Some(pairs))
    }

    fn build(
        num_classifiers: usize,
        mut sets: Vec<Vec<usize>>,
        pair_structure: Option<PairStructure>,
    ) -> Result<Self> {
        for (i, set) in sets.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if let Some(&g) = set.last() {
                if g >= num_classifiers {
                    return Err(CertError::Structure(format!(
                        "sample {i} belongs to sub-trainset {g}, outside [0, {num_classifiers})"
                    )));
                }
            }
            if let Some(ps) = pair_structure {
                if set.windows(2).any(|w| ps.pair_of(w[0]) == ps.pair_of(w[1])) {
                    return Err(CertError::Structure(format!(
                        "sample {i} is in two sub-trainsets of the same hash pair"
                    )));
                }
            }
        }
        Ok(Self {
            num_classifiers,
            sets,
            pair_structure,
        })
    }

    pub fn num_classifiers(&self) -> usize {
        self.num_classifiers
    }

    pub fn num_samples(&self) -> usize {
        self.sets.len()
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn set(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    pub fn pair_structure(&self) -> Option<&PairStructure> {
        self.pair_structure.as_ref()
    }

    /// Sizes of the `G` sub-trainsets.
    pub fn subtrainset_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_classifiers];
        for &g in self.sets.iter().flatten() {
            sizes[g] += 1;
        }
        sizes
    }

    /// Sample indices of every sub-trainset.
    pub fn subtrainsets(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classifiers];
        for (i, set) in self.sets.iter().enumerate() {
            for &g in set {
                out[g].push(i);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let wire = MembershipJson {
            num_classifiers: self.num_classifiers,
            g_hat: self.pair_structure.map(|p| p.g_hat()),
            num_pairs: self.pair_structure.map(|p| p.num_pairs()),
            sets: self.sets.clone(),
        };
        serde_json::to_string(&wire).expect("membership serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: MembershipJson = serde_json::from_str(text)
            .map_err(|e| CertError::InvalidArgument(format!("membership JSON: {e}")))?;
        match wire.g_hat {
            Some(g_hat) => {
                let pairs = PairStructure::new(wire.num_classifiers, g_hat)?;
                if let Some(n) = wire.num_pairs {
                    if n != pairs.num_pairs() {
                        return Err(CertError::Structure(format!(
                            "num_pairs {n} disagrees with ceil(G / g_hat) = {}",
                            pairs.num_pairs()
                        )));
                    }
                }
                Self::with_pairs(wire.sets, pairs)
            }
            None => Self::vanilla(wire.num_classifiers, wire.sets),
        }
    }
}

/// Hash bagging of `records` into `G` sub-trainsets of expected size `K`.
pub fn subsample(records: &[SampleRecord], num_classifiers: usize, k: usize) -> Result<Membership> {
    if num_classifiers == 0 {
        return Err(CertError::InvalidArgument("G must be at least 1".into()));
    }
    let pairs = PairStructure::for_trainset(num_classifiers, records.len(), k)?;
    subsample_with_pairs(records, pairs)
}

/// Hash bagging with an explicit pair structure. Useful when `g_hat` must
/// stay fixed while the trainset changes size.
pub fn subsample_with_pairs(records: &[SampleRecord], pairs: PairStructure) -> Result<Membership> {
    let g_hat = pairs.g_hat() as u64;
    let sets = records
        .iter()
        .map(|record| {
            (0..pairs.num_pairs())
                .filter_map(|pair| {
                    let slot = (canonical_hash(&record.payload, pair as u64) % g_hat) as usize;
                    let g = pair * pairs.g_hat() + slot;
                    (g < pairs.num_classifiers()).then_some(g)
                })
                .collect()
        })
        .collect();
    Membership::with_pairs(sets, pairs)
}

/// Union of the sub-trainsets reached by the modified samples.
pub fn influenced_classifiers(
    membership: &Membership,
    modified: &[usize],
) -> Result<BTreeSet<usize>> {
    let mut out = BTreeSet::new();
    for &i in modified {
        let set = membership.sets.get(i).ok_or_else(|| {
            CertError::InvalidArgument(format!(
                "training index {i} outside [0, {})",
                membership.num_samples()
            ))
        })?;
        out.extend(set.iter().copied());
    }
    Ok(out)
}
