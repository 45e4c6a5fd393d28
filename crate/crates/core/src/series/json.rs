//! JSON form of a series: `{d, m_max, K_max, rho, r, terms: [{k, alpha, re, im}]}`
//! with terms sorted by `(k, alpha)`. Floats are written in shortest
//! round-trip form, so serialization round-trips bit-exactly.

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{FtSeries, Shape};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDoc {
    pub k: Vec<i32>,
    pub alpha: Vec<u32>,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesDoc {
    pub d: usize,
    pub m_max: u32,
    #[serde(rename = "K_max")]
    pub k_max: u32,
    pub rho: f64,
    pub r: f64,
    pub terms: Vec<TermDoc>,
}

impl From<&FtSeries> for SeriesDoc {
    fn from(f: &FtSeries) -> Self {
        let d = f.d();
        SeriesDoc {
            d,
            m_max: f.m_max(),
            k_max: f.k_max(),
            rho: f.rho(),
            r: f.r(),
            terms: f
                .iter()
                .map(|(idx, c)| TermDoc {
                    k: idx.k_vec(d),
                    alpha: idx.alpha_vec(d),
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        }
    }
}

impl TryFrom<SeriesDoc> for FtSeries {
    type Error = Error;

    fn try_from(doc: SeriesDoc) -> Result<Self> {
        let shape = Shape::new(doc.d, doc.m_max, doc.k_max, doc.rho, doc.r)?;
        FtSeries::from_terms(
            shape,
            doc.terms
                .into_iter()
                .map(|t| (t.k, t.alpha, Complex64::new(t.re, t.im))),
        )
    }
}

impl Serialize for FtSeries {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SeriesDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for FtSeries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = SeriesDoc::deserialize(d)?;
        FtSeries::try_from(doc).map_err(serde::de::Error::custom)
    }
}

impl FtSeries {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&SeriesDoc::from(self)).expect("series documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SeriesDoc = serde_json::from_str(text)?;
        FtSeries::try_from(doc)
    }
}
