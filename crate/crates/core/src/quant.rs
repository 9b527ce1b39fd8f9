//! Luminance quantization tables, the band-scaled parameterization used by
//! the optimizer, and the JSON table file format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::write_atomic;

/// Number of anti-diagonal frequency bands in an 8x8 block.
pub const BANDS: usize = 15;
/// Dimension of the search space: one global scale plus one multiplier per band.
pub const PARAM_DIM: usize = BANDS + 1;
pub const PARAM_MIN: f64 = 0.25;
pub const PARAM_MAX: f64 = 4.0;
pub const FORMAT_VERSION: u32 = 1;

/// ITU-T T.81 Annex K luminance table, row-major.
pub const ANNEX_K_LUMA: [[u16; 8]; 8] = [
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
];

#[inline]
pub fn band_index(i: usize, j: usize) -> usize {
    debug_assert!(i < 8 && j < 8);
    i + j
}

/// Global scale `s` and per-band multipliers `m[k]`, all within
/// `[PARAM_MIN, PARAM_MAX]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandParams {
    pub s: f64,
    pub m: [f64; BANDS],
}

impl BandParams {
    pub const IDENTITY: BandParams = BandParams { s: 1.0, m: [1.0; BANDS] };

    pub fn new(s: f64, m: [f64; BANDS]) -> Result<Self> {
        let p = BandParams { s, m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (idx, v) in self.to_vector().iter().enumerate() {
            if !v.is_finite() || *v < PARAM_MIN || *v > PARAM_MAX {
                return Err(Error::Range(format!("parameter {idx} = {v} outside [{PARAM_MIN}, {PARAM_MAX}]")));
            }
        }
        Ok(())
    }

    /// `[s, m0, .., m14]`.
    pub fn to_vector(&self) -> [f64; PARAM_DIM] {
        let mut v = [0.0; PARAM_DIM];
        v[0] = self.s;
        v[1..].copy_from_slice(&self.m);
        v
    }

    /// Inverse of [`to_vector`](Self::to_vector); values are clamped into bounds.
    pub fn from_vector_clamped(v: &[f64; PARAM_DIM]) -> Self {
        let c = |x: f64| x.clamp(PARAM_MIN, PARAM_MAX);
        let mut m = [0.0; BANDS];
        for (dst, src) in m.iter_mut().zip(&v[1..]) {
            *dst = c(*src);
        }
        BandParams { s: c(v[0]), m }
    }

    /// Coordinates rescaled to `[0, 1]` per dimension.
    pub fn to_unit(&self) -> [f64; PARAM_DIM] {
        self.to_vector().map(|x| (x - PARAM_MIN) / (PARAM_MAX - PARAM_MIN))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableOrigin {
    Baseline,
    Optimized,
}

/// 8x8 quantization divisors with provenance. Entries are always in `[1, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantTable {
    entries: [[u16; 8]; 8],
    pub origin: TableOrigin,
    pub params: Option<BandParams>,
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
}

impl QuantTable {
    pub fn baseline() -> Self {
        QuantTable { entries: ANNEX_K_LUMA, origin: TableOrigin::Baseline, params: None, seed: None, lambda: None }
    }

    pub fn from_entries(entries: [[u16; 8]; 8]) -> Result<Self> {
        check_entries(&entries)?;
        Ok(QuantTable { entries, origin: TableOrigin::Optimized, params: None, seed: None, lambda: None })
    }

    pub fn uniform(value: u16) -> Result<Self> {
        Self::from_entries([[value; 8]; 8])
    }

    pub fn entries(&self) -> &[[u16; 8]; 8] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> u16 {
        self.entries[i][j]
    }
}

fn check_entries(entries: &[[u16; 8]; 8]) -> Result<()> {
    for (i, row) in entries.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !(1..=255).contains(&v) {
                return Err(Error::Range(format!("entry ({i},{j}) = {v} outside [1, 255]")));
            }
        }
    }
    Ok(())
}

/// `Q(i,j) = clamp(round(s * m[i+j] * base(i,j)), 1, 255)`.
pub fn build_table(params: &BandParams, base: &QuantTable) -> QuantTable {
    let mut entries = [[0u16; 8]; 8];
    for (i, row) in entries.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            let scaled = params.s * params.m[band_index(i, j)] * base.entries[i][j] as f64;
            *e = scaled.round().clamp(1.0, 255.0) as u16;
        }
    }
    QuantTable { entries, origin: TableOrigin::Optimized, params: Some(*params), seed: None, lambda: None }
}

#[derive(Serialize)]
struct TableFileOut<'a> {
    entries: &'a [[u16; 8]; 8],
    origin: TableOrigin,
    params: Option<&'a BandParams>,
    seed: Option<u64>,
    lambda: Option<f64>,
    format_version: u32,
}

#[derive(Deserialize)]
struct TableFileIn {
    entries: Option<Vec<Vec<i64>>>,
    origin: Option<TableOrigin>,
    #[serde(default)]
    params: Option<BandParams>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    lambda: Option<f64>,
    format_version: Option<u32>,
}

pub fn table_to_json(table: &QuantTable) -> String {
    let out = TableFileOut {
        entries: &table.entries,
        origin: table.origin,
        params: table.params.as_ref(),
        seed: table.seed,
        lambda: table.lambda,
        format_version: FORMAT_VERSION,
    };
    let mut s = serde_json::to_string_pretty(&out).expect("table serialization cannot fail");
    s.push('\n');
    s
}

pub fn table_from_json(text: &str) -> Result<QuantTable> {
    let raw: TableFileIn = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let rows = raw.entries.ok_or_else(|| Error::Schema("missing \"entries\"".into()))?;
    let origin = raw.origin.ok_or_else(|| Error::Schema("missing \"origin\"".into()))?;
    match raw.format_version {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(Error::Schema(format!("unsupported format_version {v}"))),
        None => return Err(Error::Schema("missing \"format_version\"".into())),
    }
    if rows.len() != 8 || rows.iter().any(|r| r.len() != 8) {
        return Err(Error::Schema("\"entries\" must be an 8x8 array".into()));
    }
    let mut entries = [[0u16; 8]; 8];
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !(1..=255).contains(&v) {
                return Err(Error::Range(format!("entry ({i},{j}) = {v} outside [1, 255]")));
            }
            entries[i][j] = v as u16;
        }
    }
    if let Some(p) = &raw.params {
        p.validate()?;
    }
    if let Some(l) = raw.lambda {
        if !l.is_finite() || l < 0.0 {
            return Err(Error::Range(format!("lambda {l} must be finite and non-negative")));
        }
    }
    Ok(QuantTable { entries, origin, params: raw.params, seed: raw.seed, lambda: raw.lambda })
}

pub fn save_table(table: &QuantTable, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), table_to_json(table).as_bytes())
}

pub fn load_table(path: impl AsRef<Path>) -> Result<QuantTable> {
    let path = path.as_ref();
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::FileNotFound(path.to_path_buf())),
        Err(e) if e.kind() == std::io::ErrorKind::InvalidData => {
            return Err(Error::Schema("table file is not UTF-8".into()))
        }
        Err(e) => return Err(Error::Io(e)),
    };
    table_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn baseline_values() {
        let t = QuantTable::baseline();
        assert_eq!(t.get(0, 0), 16);
        assert_eq!(t.get(7, 7), 99);
        assert_eq!(t.entries()[0], [16, 11, 10, 16, 24, 40, 51, 61]);
        assert!(t.entries().iter().flatten().all(|v| (1..=255).contains(v)));
        assert_eq!(t.origin, TableOrigin::Baseline);
    }

    #[test]
    fn bands() {
        assert_eq!(band_index(0, 0), 0);
        assert_eq!(band_index(7, 7), 14);
        assert_eq!(band_index(3, 4), 7);
        let mut sizes = [0usize; BANDS];
        for i in 0..8 {
            for j in 0..8 {
                sizes[band_index(i, j)] += 1;
            }
        }
        assert_eq!(sizes, [1, 2, 3, 4, 5, 6, 7, 8, 7, 6, 5, 4, 3, 2, 1]);
    }

    #[test]
    fn build_table_cases() {
        let base = QuantTable::baseline();
        let t = build_table(&BandParams::IDENTITY, &base);
        assert_eq!(t.entries(), base.entries());
        assert_eq!(t.origin, TableOrigin::Optimized);
        assert_eq!(t.params, Some(BandParams::IDENTITY));

        let t = build_table(&BandParams::new(2.0, [1.0; BANDS]).unwrap(), &base);
        assert_eq!(t.get(0, 0), 32);
        assert_eq!(t.get(7, 7), 198);

        let t = build_table(&BandParams::new(0.25, [0.25; BANDS]).unwrap(), &base);
        for (b, q) in base.entries().iter().flatten().zip(t.entries().iter().flatten()) {
            if *b <= 16 {
                assert_eq!(*q, 1);
            }
        }

        let t = build_table(&BandParams::new(4.0, [4.0; BANDS]).unwrap(), &base);
        for (b, q) in base.entries().iter().flatten().zip(t.entries().iter().flatten()) {
            assert_eq!(*q, (b * 16).min(255));
        }
    }

    #[test]
    fn params_bounds() {
        assert!(BandParams::new(0.2, [1.0; BANDS]).is_err());
        assert!(BandParams::new(1.0, [4.5; BANDS]).is_err());
        assert!(BandParams::new(f64::NAN, [1.0; BANDS]).is_err());
        let v = [9.0; PARAM_DIM];
        assert_eq!(BandParams::from_vector_clamped(&v).to_vector(), [PARAM_MAX; PARAM_DIM]);
        assert_eq!(BandParams::IDENTITY.to_unit()[0], 0.2);
    }

    #[test]
    fn json_round_trip_with_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.json");
        let mut m = [1.0; BANDS];
        m[3] = 0.731;
        m[14] = 3.9999;
        let mut t = build_table(&BandParams::new(1.37, m).unwrap(), &QuantTable::baseline());
        t.seed = Some(42);
        t.lambda = Some(50.0);
        save_table(&t, &path).unwrap();
        assert_eq!(load_table(&path).unwrap(), t);

        let b = QuantTable::baseline();
        save_table(&b, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"origin\": \"baseline\""));
        assert!(text.contains("\"params\": null"));
        assert!(text.contains("\"format_version\": 1"));
        assert_eq!(load_table(&path).unwrap(), b);
    }

    #[test]
    fn json_rejections() {
        let good = table_to_json(&QuantTable::baseline());

        let zero = good.replacen("16", "0", 1);
        assert!(matches!(table_from_json(&zero), Err(Error::Range(_))));
        let big = good.replacen("16", "256", 1);
        assert!(matches!(table_from_json(&big), Err(Error::Range(_))));

        let v: serde_json::Value = serde_json::from_str(&good).unwrap();
        let mut missing = v.clone();
        missing.as_object_mut().unwrap().remove("entries");
        assert!(matches!(table_from_json(&missing.to_string()), Err(Error::Schema(_))));

        let mut short = v.clone();
        short["entries"].as_array_mut().unwrap().pop();
        assert!(matches!(table_from_json(&short.to_string()), Err(Error::Schema(_))));

        let mut bad_origin = v.clone();
        bad_origin["origin"] = "learned".into();
        assert!(matches!(table_from_json(&bad_origin.to_string()), Err(Error::Schema(_))));

        let mut bad_params = v.clone();
        bad_params["params"] = serde_json::json!({"s": 9.0, "m": vec![1.0; BANDS]});
        assert!(matches!(table_from_json(&bad_params.to_string()), Err(Error::Range(_))));

        let mut bad_version = v;
        bad_version["format_version"] = 2.into();
        assert!(matches!(table_from_json(&bad_version.to_string()), Err(Error::Schema(_))));

        assert!(matches!(table_from_json("not json"), Err(Error::Schema(_))));
    }

    fn arb_params() -> impl Strategy<Value = BandParams> {
        (PARAM_MIN..=PARAM_MAX, proptest::array::uniform15(PARAM_MIN..=PARAM_MAX))
            .prop_map(|(s, m)| BandParams { s, m })
    }

    proptest! {
        #[test]
        fn built_tables_are_in_range_and_monotone_in_scale(p in arb_params(), ds in 0.0f64..3.75) {
            let base = QuantTable::baseline();
            let lo = build_table(&p, &base);
            let hi = build_table(&BandParams { s: (p.s + ds).min(PARAM_MAX), ..p }, &base);
            for (a, b) in lo.entries().iter().flatten().zip(hi.entries().iter().flatten()) {
                prop_assert!((1..=255).contains(a));
                prop_assert!(b >= a);
            }
        }

        #[test]
        fn json_round_trip_is_lossless(p in arb_params(), seed in proptest::option::of(any::<u64>()),
                                       lambda in proptest::option::of(0.0f64..1e6)) {
            let mut t = build_table(&p, &QuantTable::baseline());
            t.seed = seed;
            t.lambda = lambda;
            prop_assert_eq!(table_from_json(&table_to_json(&t)).unwrap(), t);
        }
    }
}
