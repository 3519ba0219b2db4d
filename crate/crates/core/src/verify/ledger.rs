//! Machine-checked record of each step of an inequality chain.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Anchor keys and the displayed inequality each one replays.
pub const ANCHORS: &[(&str, &str)] = &[
    ("G-union", r"|G|\leq \sum_{i=1}^m |G_i| \leq m\|M\|t^{-\frac{1}{m}}"),
    ("E1-chebyshev", r"\left|E_1\right|\leq 4t^{-\frac{2}{m}}\int_{\mathbb{R}^n}|T(g_1,\ldots,g_m)(x)|^{\frac{2}{m}}dx"),
    ("E1-boundedness", r"\leq 4\|T\|^{\frac{2}{m}}t^{-\frac{2}{m}}\prod_{i=1}^m\left(\int_{\mathbb{R}^n}|g_i(x)|^2dx\right)^{\frac{1}{m}}"),
    ("E1-final", r"\left|E_1\right|\leq B_1t^{-\frac{1}{m}}"),
    ("union-Es", r"\left|\left\{\left|T(f_1,\ldots,f_m)\right|>t\right\}\right|\leq \sum_{s=1}^{2^m}|E_s|"),
    ("Es-split", r"\left|\widetilde{E}_s\right|\leq \sum_{k=1}^{l}\left(|G|+|S_k|\right)+|S|"),
    ("Es-final", r"|\widetilde{E}_s|\leq B_2t^{-\frac{1}{m}}"),
    ("Sk-chebyshev", r"|S_k|\leq (l+1)2^mt^{-1}\int_{\mathbb{R}^n\setminus G}\left|T\left(\vv{\nu^N}_{1,k-1},b_{k}^N-\nu_{k}^N,\vv{b^N}_{k+1,l},\vv{g}_{l+1,m}\right)(x)\right|dx"),
    ("Sk-cancellation", r"\leq (m+1)2^{m+1}t^{-1}\sum_{j_1,\ldots,j_l=1}^N\left(\prod_{i=1}^l\|b_{i,j_i}\|_{L^1}\right)\left(\prod_{i=l+1}^m\|g_i\|_{L^{\infty}}\right)\int\sup\int|K(x,\vv{y}_{1,m})-K(x,\vv{c},\vv{y}_{l+1,m})|"),
    ("mass-bound", r"\|b_{i,j}\|_{L^1(\mathbb{R}^n)}\leq (17\sqrt{n})^n t^{\frac{1}{m}}|Q_{i,j}|"),
    ("Sk-mass", r"\leq (m+1)2^{m+1}(17\sqrt{n})^{nl}\sum_{j_1,\ldots,j_l=1}^N\left(\prod_{i=1}^l|Q_{i,j_i}|\right)\int\sup\int|K(x,\vv{y}_{1,m})-K(x,\vv{c},\vv{y}_{l+1,m})|"),
    ("lemma1", r"\sum_{j_1,\ldots,j_l}\prod_{i=1}^l|S_{i,j_i}|\int\sup\int_{\mathbb{R}^n\setminus\left(\bigcup_{i=1}^l \Omega_{i}^{*}\right)}|K(x,\vv{y}_{1,m})-K(x,\vv{c},\vv{y}_{l+1,m})|\leq A_1\sum_{i=1}^{l}\left|\Omega_{i}\right|"),
    ("Sk-final", r"|S_k|\leq A_1m(m+1)2^{m+1}(17\sqrt{n})^{nm}\|M\|t^{-\frac{1}{m}}"),
    ("A2-final", r"|\{|T(f_1,\ldots,f_m)|>t\}|\leq \left(B_1+\left(2^m-1\right)B_2\right)t^{-\frac{1}{m}}"),
    ("ball-radius", r"|E_{i,j}|=a_{i,j}t^{-\frac{1}{m}}"),
    ("ball-union", r"|E_i|=\sum_{j=1}^N|E_{i,j}|=\|\nu_i\|t^{-\frac{1}{m}}"),
    ("Estar-union", r"|E^*|\leq \sum_{i=1}^l|E^*_{i}|"),
    ("Estar-doubling", r"\sum_{i=1}^l|E^*_{i}|\leq 2^n\sum_{i=1}^l|E_{i}|"),
    ("Estar-bound", r"|E^*|\leq m2^{n}t^{-\frac{1}{m}}"),
    ("telescoping", r"|\{|T(\nu_1,\ldots,\nu_{l},f_{l+1},\ldots,f_{m})|>t\}|\leq\sum_{k=1}^{l}\left|\left\{|\sigma_{k-1}-\sigma_{k}|>\frac{t}{l+1}\right\}\right|+\left|\left\{\left|\sigma_l\right|>\frac{t}{l+1}\right\}\right|"),
    ("Pk-split", r"\left|\left\{|\sigma_{k-1}-\sigma_{k}|>\frac{t}{l+1}\right\}\right|\leq|E^*|+|P_k|"),
    ("Estar-sum", r"\sum_{k=1}^{l}|E^*|\leq m^22^nt^{-\frac{1}{m}}"),
    ("Pk-chebyshev", r"|P_k|\leq \frac{l+1}{t}\int_{\mathbb{R}^n\setminus E^*}\left|\sigma_{k-1}-\sigma_k\right|dx"),
    ("Pk-cancellation", r"|P_k| \leq 2(m+1)\sum_{j_1,\ldots,j_l=1}^N\left(\prod_{i=1}^{l}|E_{i,j_i}|\right)\int\sup\int_{\mathbb{R}^n\setminus E^*}|K(x,\vv{y}_{1,m})-K(x,\vv{x},\vv{y}_{l+1,m})|"),
    ("Pk-final", r"|P_k|\leq 2m(m+1)A_1t^{-\frac{1}{m}}"),
    ("P-chebyshev", r"|P|\leq \frac{(l+1)^{\frac{2}{m}}}{t^{\frac{2}{m}}}\int_{\mathbb{R}^n}\left|\sigma_l(x)\right|^{\frac{2}{m}}dx"),
    ("P-final", r"|P|\leq (m+1)^{\frac{2}{m}}\|T\|^{\frac{2}{m}}t^{-\frac{1}{m}}"),
    ("A3-final", r"|\{|T(\nu_1,\ldots,\nu_{l},f_{l+1},\ldots,f_{m})|>t\}|\leq A_3t^{-\frac{1}{m}}"),
];

/// Looks up the display for an anchor key.
pub fn anchor(key: &str) -> &'static str {
    ANCHORS.iter().find(|(k, _)| *k == key).map(|(_, v)| *v).unwrap_or_else(|| panic!("unknown anchor `{key}`"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub name: String,
    pub anchor: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    pub tol: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub h: f64,
    #[serde(rename = "box")]
    pub extent: Vec<[f64; 2]>,
    pub eps: f64,
    #[serde(rename = "N")]
    pub n_list: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InequalityLedger {
    pub entries: Vec<LedgerEntry>,
    pub constants: BTreeMap<String, f64>,
    pub provenance: Provenance,
    /// Free-form remarks: skipped steps, trivially vanishing terms, counts.
    pub notes: Vec<String>,
}

impl InequalityLedger {
    pub fn new(provenance: Provenance) -> Self {
        Self { provenance, ..Default::default() }
    }

    /// Records `lhs <= rhs (1 + tol)` under anchor `key`. Non-finite sides
    /// are not recorded; a note says so instead.
    pub fn check(&mut self, name: impl Into<String>, key: &str, lhs: f64, rhs: f64, tol: f64) -> bool {
        let name = name.into();
        if !(lhs.is_finite() && rhs.is_finite()) {
            self.notes.push(format!("{name}: not recorded (lhs {lhs}, rhs {rhs})"));
            return true;
        }
        let pass = lhs <= rhs * (1.0 + tol);
        self.entries.push(LedgerEntry { name, anchor: anchor(key).to_string(), lhs, rhs, pass, tol });
        pass
    }

    /// Records a constant; non-finite values become a note.
    pub fn constant(&mut self, name: &str, value: f64) {
        if value.is_finite() {
            self.constants.insert(name.to_string(), value);
        } else {
            self.notes.push(format!("constant {name} is not finite ({value})"));
        }
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn failures(&self) -> Vec<&LedgerEntry> {
        self.entries.iter().filter(|e| !e.pass).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
