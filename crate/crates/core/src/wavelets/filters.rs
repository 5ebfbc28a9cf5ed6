use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Daubechies scaling filters (reconstruction low-pass), db1 through db6.
const DB1: [f64; 2] = [0.7071067811865476, 0.7071067811865476];
const DB2: [f64; 4] = [
    0.48296291314453416,
    0.8365163037378079,
    0.2241438680420134,
    -0.12940952255126037,
];
const DB3: [f64; 6] = [
    0.33267055295008263,
    0.8068915093110925,
    0.45987750211849154,
    -0.13501102001025458,
    -0.08544127388202666,
    0.03522629188570953,
];
const DB4: [f64; 8] = [
    0.2303778133088965,
    0.7148465705529157,
    0.6308807679298589,
    -0.027983769416859854,
    -0.18703481171909309,
    0.030841381835560764,
    0.0328830116668852,
    -0.010597401785069032,
];
const DB5: [f64; 10] = [
    0.16010239797419293,
    0.6038292697971896,
    0.7243085284377729,
    0.13842814590132074,
    -0.24229488706638203,
    -0.032244869584638375,
    0.07757149384004572,
    -0.006241490212798274,
    -0.012580751999081999,
    0.0033357252854737712,
];
const DB6: [f64; 12] = [
    0.11154074335010947,
    0.49462389039845306,
    0.7511339080210954,
    0.31525035170919763,
    -0.22626469396543983,
    -0.12976686756726194,
    0.09750160558732304,
    0.027522865530305727,
    -0.03158203931748603,
    0.0005538422011614961,
    0.004777257510945511,
    -0.0010773010853084796,
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletFamily {
    Db1,
    Db2,
    Db3,
    #[default]
    Db4,
    Db5,
    Db6,
}

impl WaveletFamily {
    pub const ALL: [WaveletFamily; 6] = [
        WaveletFamily::Db1,
        WaveletFamily::Db2,
        WaveletFamily::Db3,
        WaveletFamily::Db4,
        WaveletFamily::Db5,
        WaveletFamily::Db6,
    ];

    fn scaling(self) -> &'static [f64] {
        match self {
            WaveletFamily::Db1 => &DB1,
            WaveletFamily::Db2 => &DB2,
            WaveletFamily::Db3 => &DB3,
            WaveletFamily::Db4 => &DB4,
            WaveletFamily::Db5 => &DB5,
            WaveletFamily::Db6 => &DB6,
        }
    }
}

impl fmt::Display for WaveletFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = WaveletFamily::ALL.iter().position(|w| w == self).unwrap() + 1;
        write!(f, "db{n}")
    }
}

impl FromStr for WaveletFamily {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        WaveletFamily::ALL
            .into_iter()
            .find(|w| w.to_string() == s)
            .ok_or_else(|| format!("unknown wavelet family `{s}` (expected db1..db6)"))
    }
}

/// Orthogonal two-channel filter bank.
///
/// `lo_r`/`hi_r` follow the usual reconstruction convention and `lo_d`/`hi_d`
/// are their time reversals. The transforms in this module correlate the
/// signal with `lo_r`/`hi_r`, so Haar details come out as `(even - odd) / sqrt(2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    pub family: WaveletFamily,
    pub lo_d: Vec<f64>,
    pub hi_d: Vec<f64>,
    pub lo_r: Vec<f64>,
    pub hi_r: Vec<f64>,
}

impl FilterBank {
    pub fn new(family: WaveletFamily) -> Self {
        let lo_r = family.scaling().to_vec();
        let l = lo_r.len();
        let hi_r: Vec<f64> = (0..l)
            .map(|j| if j % 2 == 0 { lo_r[l - 1 - j] } else { -lo_r[l - 1 - j] })
            .collect();
        let lo_d = lo_r.iter().rev().copied().collect();
        let hi_d = hi_r.iter().rev().copied().collect();
        Self {
            family,
            lo_d,
            hi_d,
            lo_r,
            hi_r,
        }
    }

    pub fn len(&self) -> usize {
        self.lo_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo_r.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_sums_and_norms() {
        for fam in WaveletFamily::ALL {
            let b = FilterBank::new(fam);
            assert!((b.lo_d.iter().sum::<f64>() - 2f64.sqrt()).abs() < 1e-12, "{fam}");
            assert!(b.hi_d.iter().sum::<f64>().abs() < 1e-12, "{fam}");
            assert!((b.lo_r.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn even_shift_orthogonality() {
        for fam in WaveletFamily::ALL {
            let b = FilterBank::new(fam);
            let h = &b.lo_r;
            for k in 1..h.len() / 2 {
                let s: f64 = (0..h.len() - 2 * k).map(|j| h[j] * h[j + 2 * k]).sum();
                assert!(s.abs() < 1e-12, "{fam} shift {k}: {s}");
            }
        }
    }

    #[test]
    fn family_names_round_trip() {
        for fam in WaveletFamily::ALL {
            assert_eq!(fam.to_string().parse::<WaveletFamily>().unwrap(), fam);
        }
        assert!("db7".parse::<WaveletFamily>().is_err());
    }
}
