//! Bit mapping for per-user GSM symbols: active index combination (AIC)
//! selection plus Gray-labelled constellation values.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constellation::{Constellation, Modulation};
use crate::error::{Error, Result};

/// Largest supported number of spatial bits; keeps the AIC table enumerable.
pub const MAX_SPATIAL_BITS: usize = 20;

/// Full GSM carries an independent symbol on each active position; the
/// reduced variant repeats one symbol on all of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Full,
    Reduced,
}

/// Index-modulation parameters for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct ImParams {
    n_s: usize,
    n_a: usize,
    variant: Variant,
    constellation: Constellation,
    spatial_bits: usize,
}

impl ImParams {
    pub fn new(n_s: usize, n_a: usize, modulation: Modulation, variant: Variant) -> Result<Self> {
        if n_a == 0 || n_a > n_s {
            return Err(Error::Config(format!(
                "1 <= n_a <= n_s violated (n_a = {n_a}, n_s = {n_s})"
            )));
        }
        let spatial_bits = floor_log2_binomial(n_s, n_a);
        if spatial_bits > MAX_SPATIAL_BITS {
            return Err(Error::Config(format!(
                "{spatial_bits} spatial bits exceeds the supported maximum of {MAX_SPATIAL_BITS}"
            )));
        }
        Ok(Self {
            n_s,
            n_a,
            variant,
            constellation: Constellation::new(modulation),
            spatial_bits,
        })
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn modulation(&self) -> Modulation {
        self.constellation.modulation()
    }

    pub fn spatial_bits(&self) -> usize {
        self.spatial_bits
    }

    /// Number of constellation symbols carried per user symbol.
    pub fn carried_symbols(&self) -> usize {
        match self.variant {
            Variant::Full => self.n_a,
            Variant::Reduced => 1,
        }
    }

    pub fn symbol_bits(&self) -> usize {
        self.carried_symbols() * self.constellation.bits()
    }

    pub fn bits_per_user(&self) -> usize {
        self.spatial_bits + self.symbol_bits()
    }
}

/// Bits carried by one multi-user symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitBudget {
    pub spatial: usize,
    pub per_user: usize,
    pub total: usize,
}

pub fn bits_per_symbol(params: &ImParams, n_u: usize) -> BitBudget {
    BitBudget {
        spatial: params.spatial_bits(),
        per_user: params.bits_per_user(),
        total: n_u * params.bits_per_user(),
    }
}

/// `C(n, k)` saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        match acc.checked_mul((n - i) as u128) {
            Some(v) => acc = v / (i as u128 + 1),
            None => return u128::MAX,
        }
    }
    acc
}

pub fn floor_log2_binomial(n: usize, k: usize) -> usize {
    let c = binomial(n, k);
    (127 - c.leading_zeros()) as usize
}

/// The first `2^spatial_bits` combinations in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct AicTable {
    combos: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
}

impl AicTable {
    pub fn build(params: &ImParams) -> Self {
        let want = 1usize << params.spatial_bits();
        let (n, k) = (params.n_s(), params.n_a());
        let mut combos = Vec::with_capacity(want);
        let mut cur: Vec<usize> = (0..k).collect();
        loop {
            combos.push(cur.clone());
            if combos.len() == want {
                break;
            }
            // advance to the next combination in lexicographic order
            let mut i = k;
            while i > 0 && cur[i - 1] == n - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            cur[i - 1] += 1;
            for j in i..k {
                cur[j] = cur[j - 1] + 1;
            }
        }
        let index = combos
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Self { combos, index }
    }

    pub fn len(&self) -> usize {
        self.combos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combos.is_empty()
    }

    pub fn combo(&self, idx: usize) -> &[usize] {
        &self.combos[idx]
    }

    pub fn combos(&self) -> &[Vec<usize>] {
        &self.combos
    }

    pub fn index_of(&self, aic: &[usize]) -> Option<usize> {
        self.index.get(aic).copied()
    }
}

/// A sparse per-user symbol: sorted active positions and their values.
#[derive(Debug, Clone, PartialEq)]
pub struct GsmSymbol {
    pub aic: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl GsmSymbol {
    pub fn zero(n_a: usize) -> Self {
        Self {
            aic: (0..n_a).collect(),
            values: vec![Complex64::new(0.0, 0.0); n_a],
        }
    }

    /// Length-`n_s` dense vector with zeros off the active positions.
    pub fn densify(&self, n_s: usize) -> Vec<Complex64> {
        let mut s = vec![Complex64::new(0.0, 0.0); n_s];
        for (&i, &v) in self.aic.iter().zip(&self.values) {
            s[i] = v;
        }
        s
    }
}

pub fn encode(bits: &[u8], params: &ImParams, table: &AicTable) -> Result<GsmSymbol> {
    if bits.len() != params.bits_per_user() {
        return Err(Error::Contract(format!(
            "expected {} bits per user symbol, got {}",
            params.bits_per_user(),
            bits.len()
        )));
    }
    let (spatial, rest) = bits.split_at(params.spatial_bits());
    let aic_idx = spatial
        .iter()
        .fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
    let aic = table.combo(aic_idx).to_vec();
    let c = params.constellation();
    let values = match params.variant() {
        Variant::Full => rest
            .chunks_exact(c.bits())
            .map(|chunk| c.point(c.bits_to_label(chunk)))
            .collect(),
        Variant::Reduced => vec![c.point(c.bits_to_label(rest)); params.n_a()],
    };
    Ok(GsmSymbol { aic, values })
}

pub fn decode(symbol: &GsmSymbol, params: &ImParams, table: &AicTable) -> Result<Vec<u8>> {
    let mut out = vec![0u8; params.bits_per_user()];
    decode_into(symbol, params, table, &mut out)?;
    Ok(out)
}

/// Writes the bits of `symbol` into `out`, which must hold `bits_per_user` bits.
pub fn decode_into(
    symbol: &GsmSymbol,
    params: &ImParams,
    table: &AicTable,
    out: &mut [u8],
) -> Result<()> {
    let aic_idx = table
        .index_of(&symbol.aic)
        .ok_or_else(|| Error::Decode(format!("AIC {:?} is not in the table", symbol.aic)))?;
    let sb = params.spatial_bits();
    for (j, b) in out[..sb].iter_mut().enumerate() {
        *b = ((aic_idx >> (sb - 1 - j)) & 1) as u8;
    }
    let c = params.constellation();
    let k = c.bits();
    for (j, &v) in symbol
        .values
        .iter()
        .take(params.carried_symbols())
        .enumerate()
    {
        let label = c
            .label_of(v)
            .ok_or_else(|| Error::Decode(format!("{v} is not a constellation point")))?;
        c.label_to_bits(label, &mut out[sb + j * k..sb + (j + 1) * k]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(n_s: usize, n_a: usize, m: &str) -> ImParams {
        ImParams::new(n_s, n_a, m.parse().unwrap(), Variant::Full).unwrap()
    }

    /// All k-subsets of 0..n by brute force over bitmasks, sorted lexicographically.
    fn all_combos(n: usize, k: usize) -> Vec<Vec<usize>> {
        let mut v: Vec<Vec<usize>> = (0u32..1 << n)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
            .collect();
        v.sort();
        v
    }

    #[test]
    fn bit_budget_reference_points() {
        let b = bits_per_symbol(&params(7, 2, "qam64"), 15);
        assert_eq!((b.per_user, b.total), (16, 240));
        let b = bits_per_symbol(&params(9, 3, "qpsk"), 12);
        assert_eq!((b.per_user, b.total), (12, 144));
        let b = bits_per_symbol(&params(4, 4, "qpsk"), 1);
        assert_eq!((b.spatial, b.per_user), (0, 8));
    }

    #[test]
    fn reduced_variant_budget() {
        let p = ImParams::new(8, 2, "qam16".parse().unwrap(), Variant::Reduced).unwrap();
        assert_eq!(p.bits_per_user(), 4 + 4);
    }

    #[test]
    fn table_matches_enumeration() {
        for (n, k, want) in [(7, 2, 16), (9, 3, 64), (3, 3, 1), (4, 2, 4), (6, 3, 16)] {
            let t = AicTable::build(&params(n, k, "qpsk"));
            let all = all_combos(n, k);
            let pow2 = 1usize << (usize::BITS - 1 - all.len().leading_zeros());
            assert_eq!(t.len(), pow2);
            assert_eq!(t.len(), want);
            assert_eq!(t.combos(), &all[..pow2]);
        }
    }

    #[test]
    fn spatial_bit_bracket() {
        for n in 1..20 {
            for k in 1..=n {
                let s = floor_log2_binomial(n, k);
                let c = binomial(n, k);
                assert!(1u128 << s <= c && c < 1u128 << (s + 1), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn encode_all_zero_qpsk() {
        let p = params(4, 1, "qpsk");
        let t = AicTable::build(&p);
        let s = encode(&[0, 0, 0, 0], &p, &t).unwrap();
        assert_eq!(s.aic, vec![0]);
        assert_eq!(s.values[0], p.constellation().point(0));
    }

    #[test]
    fn single_aic_is_forced() {
        let p = params(3, 3, "qpsk");
        let t = AicTable::build(&p);
        let s = encode(&[0; 6], &p, &t).unwrap();
        assert_eq!(s.aic, vec![0, 1, 2]);
        assert!(s.densify(3).iter().all(|v| v.norm() > 0.0));
    }

    #[test]
    fn wrong_bit_count_rejected() {
        let p = params(4, 2, "qpsk");
        let t = AicTable::build(&p);
        assert!(matches!(encode(&[0; 5], &p, &t), Err(Error::Contract(_))));
    }

    #[test]
    fn out_of_table_aic_fails_decode() {
        let p = params(7, 2, "qpsk");
        let t = AicTable::build(&p);
        // {5,6} is the last of 21 combinations, truncated away
        let s = GsmSymbol {
            aic: vec![5, 6],
            values: vec![p.constellation().point(0); 2],
        };
        assert!(matches!(decode(&s, &p, &t), Err(Error::Decode(_))));
    }

    #[test]
    fn densify_definition() {
        let v = Complex64::new(0.3, -0.2);
        let s = GsmSymbol {
            aic: vec![1],
            values: vec![v],
        };
        assert_eq!(s.densify(3), vec![0.0.into(), v, 0.0.into()]);
    }

    #[test]
    fn exhaustive_round_trip_small() {
        for n in 1..=6 {
            for k in 1..=n {
                for m in ["bpsk", "qpsk", "qam16"] {
                    for variant in [Variant::Full, Variant::Reduced] {
                        let p = ImParams::new(n, k, m.parse().unwrap(), variant).unwrap();
                        let t = AicTable::build(&p);
                        let nb = p.bits_per_user();
                        let limit = 1u64 << nb.min(14);
                        for word in 0..limit {
                            let bits: Vec<u8> =
                                (0..nb).map(|j| ((word >> (j % 64)) & 1) as u8).collect();
                            let s = encode(&bits, &p, &t).unwrap();
                            assert!(t.index_of(&s.aic).is_some());
                            assert_eq!(decode(&s, &p, &t).unwrap(), bits);
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip_random(seed in any::<u64>(), n in 2usize..12, m in prop::sample::select(vec!["qpsk", "qam16", "qam64", "psk8"])) {
            let k = 1 + (seed as usize % n);
            let p = ImParams::new(n, k, m.parse().unwrap(), Variant::Full).unwrap();
            let t = AicTable::build(&p);
            let bits: Vec<u8> = (0..p.bits_per_user()).map(|j| ((seed.rotate_left(j as u32 * 7) ^ j as u64) & 1) as u8).collect();
            let s = encode(&bits, &p, &t).unwrap();
            prop_assert_eq!(s.densify(n).iter().filter(|v| v.norm() > 0.0).count(), k);
            prop_assert!(s.aic.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(decode(&s, &p, &t).unwrap(), bits);
        }
    }
}
