#![allow(dead_code)]

use std::path::PathBuf;

use gatt::conditioning::{ConditioningSpec, TreatmentSet};
use gatt::frame::{CovariateBlock, LongitudinalFrame, OutcomeFamily};
use gatt::policy::{PolicyRule, PolicySpec};
use gatt::simlab::BinaryChain;

/// 1000 units whose cell counts and cell outcome means reproduce the ATT toy
/// law exactly: `P(L=1) = 0.4`, `P(A=1 | L) = 0.2 + 0.5 L`,
/// `E[Y | A, L] = 0.1 + 0.3 A + 0.2 L`.
pub fn exact_att_frame() -> LongitudinalFrame {
    // (L, A, units, units with Y = 1)
    let cells = [(0.0, 0.0, 480, 48), (0.0, 1.0, 120, 48), (1.0, 0.0, 120, 36), (1.0, 1.0, 280, 168)];
    let (mut l, mut a, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (lv, av, units, ones) in cells {
        for k in 0..units {
            l.push(lv);
            a.push(av);
            y.push(if k < ones { 1.0 } else { 0.0 });
        }
    }
    LongitudinalFrame::new(vec![CovariateBlock::new(vec!["1".into()], vec![l])], vec![a], y, OutcomeFamily::Binomial)
        .unwrap()
}

pub fn att_policy() -> PolicySpec {
    PolicySpec::new(vec![PolicyRule::Constant { value: 0.0 }])
}

pub fn att_conditioning() -> ConditioningSpec {
    ConditioningSpec::new(vec![TreatmentSet::value(1.0)])
}

pub fn chain() -> BinaryChain {
    BinaryChain {
        tau: 2,
        l1_p: 0.4,
        l0: -0.2,
        l_prev: 0.8,
        l_a: 0.6,
        a0: -0.3,
        a_prev: 1.1,
        a_l: 0.7,
        y0: -0.5,
        y_a: 0.9,
        y_l: 0.4,
    }
}

pub fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn expit(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}
