//! Nearest-centroid state classification in (log V_I, log V_g2, mean_g2)
//! space, with a hard rule layer for the g2 = 1 classes.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::FeatureVector;

/// Half-width of the `mean_g2 = 1` acceptance band used by the rule layer.
pub const DEFAULT_G2_UNITY_BAND: f64 = 0.05;

/// Nominal mode counts of the incoherent classes the rule layer can emit.
const INCOHERENT_D: [(StateClass, f64); 2] = [
    (StateClass::Incoherent2Mode, 2.0),
    (StateClass::IncoherentDispersive, 20.0),
];

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("class {class} has {got} feature vectors, need at least {needed}")]
    TooFewSamples {
        class: StateClass,
        needed: usize,
        got: usize,
    },
    #[error("features carry no g2 statistics (all records had R = 0)")]
    MissingG2Features,
    #[error("model has no trained classes")]
    Untrained,
    #[error("degenerate class covariance for {class}")]
    DegenerateCovariance { class: StateClass },
}

/// The closed label roster.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum StateClass {
    SinglePhoton,
    TwoPhotonFock,
    IndistBiphoton,
    DistBiphoton,
    Noon2,
    Incoherent2Mode,
    IndistSpectralBiphoton,
    DistSpectralBiphoton,
    IncoherentDispersive,
}

impl StateClass {
    pub const ALL: [StateClass; 9] = [
        StateClass::SinglePhoton,
        StateClass::TwoPhotonFock,
        StateClass::IndistBiphoton,
        StateClass::DistBiphoton,
        StateClass::Noon2,
        StateClass::Incoherent2Mode,
        StateClass::IndistSpectralBiphoton,
        StateClass::DistSpectralBiphoton,
        StateClass::IncoherentDispersive,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StateClass::SinglePhoton => "SinglePhoton",
            StateClass::TwoPhotonFock => "TwoPhotonFock",
            StateClass::IndistBiphoton => "IndistBiphoton",
            StateClass::DistBiphoton => "DistBiphoton",
            StateClass::Noon2 => "Noon2",
            StateClass::Incoherent2Mode => "Incoherent2Mode",
            StateClass::IndistSpectralBiphoton => "IndistSpectralBiphoton",
            StateClass::DistSpectralBiphoton => "DistSpectralBiphoton",
            StateClass::IncoherentDispersive => "IncoherentDispersive",
        }
    }
}

impl fmt::Display for StateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StateClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StateClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown state class `{s}`"))
    }
}

/// A training example.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    pub label: StateClass,
    pub features: FeatureVector,
}

/// Second-order summary of one class's cloud in feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub label: StateClass,
    pub centroid: [f64; 3],
    /// Sample covariance, row-major symmetric.
    pub covariance: [[f64; 3]; 3],
    /// Set when the raw covariance was singular and a ridge was added.
    pub regularized: bool,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub version: u32,
    pub g2_unity_band: f64,
    pub classes: Vec<ClassStats>,
}

/// Coordinates used for training and classification. Logs tame the
/// decade-spanning visibilities; the floor keeps pathological zero
/// visibilities finite.
pub fn feature_point(f: &FeatureVector) -> Result<[f64; 3], ClassifierError> {
    let (v_g2, mean_g2) = match (f.v_g2, f.mean_g2) {
        (Some(v), Some(m)) => (v, m),
        _ => return Err(ClassifierError::MissingG2Features),
    };
    let ln_floor = |v: f64| v.max(1e-12).ln();
    Ok([ln_floor(f.v_i), ln_floor(v_g2), mean_g2])
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn inv3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = det3(m);
    if det.abs() < 1e-300 || !det.is_finite() {
        return None;
    }
    let c = |r1: usize, c1: usize, r2: usize, c2: usize| m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1];
    let adj = [
        [c(1, 1, 2, 2), c(0, 2, 2, 1), c(0, 1, 1, 2)],
        [c(1, 2, 2, 0), c(0, 0, 2, 2), c(0, 2, 1, 0)],
        [c(1, 0, 2, 1), c(0, 1, 2, 0), c(0, 0, 1, 1)],
    ];
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = adj[i][j] / det;
        }
    }
    Some(out)
}

/// Train per-class centroids and covariances. Every class present in the
/// training set needs at least 5 examples; singular covariances (duplicated
/// features) get an `1e-6` ridge and are flagged.
pub fn fit_model(labeled: &[LabeledFeatures]) -> Result<ClassifierModel, ClassifierError> {
    let mut by_class: BTreeMap<StateClass, Vec<[f64; 3]>> = BTreeMap::new();
    for ex in labeled {
        by_class
            .entry(ex.label)
            .or_default()
            .push(feature_point(&ex.features)?);
    }
    let mut classes = Vec::with_capacity(by_class.len());
    for (label, points) in by_class {
        if points.len() < 5 {
            return Err(ClassifierError::TooFewSamples {
                class: label,
                needed: 5,
                got: points.len(),
            });
        }
        let n = points.len() as f64;
        let mut centroid = [0.0; 3];
        for p in &points {
            for k in 0..3 {
                centroid[k] += p[k];
            }
        }
        for c in &mut centroid {
            *c /= n;
        }
        let mut cov = [[0.0; 3]; 3];
        for p in &points {
            for i in 0..3 {
                for j in 0..3 {
                    cov[i][j] += (p[i] - centroid[i]) * (p[j] - centroid[j]);
                }
            }
        }
        for row in &mut cov {
            for v in row.iter_mut() {
                *v /= n - 1.0;
            }
        }
        let singular =
            det3(&cov).abs() < 1e-30 || (0..3).any(|k| cov[k][k] < 1e-12);
        if singular {
            for (k, row) in cov.iter_mut().enumerate() {
                row[k] += 1e-6;
            }
        }
        classes.push(ClassStats {
            label,
            centroid,
            covariance: cov,
            regularized: singular,
            n_samples: points.len(),
        });
    }
    Ok(ClassifierModel {
        version: 1,
        g2_unity_band: DEFAULT_G2_UNITY_BAND,
        classes,
    })
}

/// Hard rules that fire before any distance computation: a measured
/// `mean_g2` compatible with 1 identifies the no-pair-correlation classes,
/// split by their occupied-mode count.
pub fn decision_rules(f: &FeatureVector, g2_unity_band: f64) -> Option<StateClass> {
    let mean_g2 = f.mean_g2?;
    if (mean_g2 - 1.0).abs() >= g2_unity_band {
        return None;
    }
    if f.d_hat < 1.5 {
        return Some(StateClass::SinglePhoton);
    }
    let (class, _) = INCOHERENT_D
        .into_iter()
        .min_by(|(_, da), (_, db)| {
            (f.d_hat - da)
                .abs()
                .partial_cmp(&(f.d_hat - db).abs())
                .unwrap()
        })
        .unwrap();
    Some(class)
}

/// Classify one feature vector: rule layer first, then Mahalanobis nearest
/// centroid. The score is the softmin weight of the winning class (1.0 for
/// rule hits), so borderline calls are visible.
pub fn classify(
    f: &FeatureVector,
    model: &ClassifierModel,
) -> Result<(StateClass, f64), ClassifierError> {
    if model.classes.is_empty() {
        return Err(ClassifierError::Untrained);
    }
    if let Some(class) = decision_rules(f, model.g2_unity_band) {
        return Ok((class, 1.0));
    }
    let p = feature_point(f)?;
    let mut d2 = Vec::with_capacity(model.classes.len());
    for cs in &model.classes {
        let inv = inv3(&cs.covariance)
            .ok_or(ClassifierError::DegenerateCovariance { class: cs.label })?;
        let d = [
            p[0] - cs.centroid[0],
            p[1] - cs.centroid[1],
            p[2] - cs.centroid[2],
        ];
        let mut q = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                q += d[i] * inv[i][j] * d[j];
            }
        }
        d2.push(q);
    }
    let best = d2
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let dmin = d2[best];
    let weights: f64 = d2.iter().map(|q| (-(q - dmin) / 2.0).exp()).sum();
    Ok((model.classes[best].label, 1.0 / weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::Corrections;

    fn fv(v_i: f64, v_g2: f64, mean_g2: f64) -> FeatureVector {
        FeatureVector {
            n_records: 500,
            n_g2_valid: 500,
            v_i,
            v_c: 2.0 * v_i,
            v_g2: Some(v_g2),
            mean_g2: Some(mean_g2),
            d_hat: 1.0 / v_i,
            purity: 0.0,
            pair_dim_hat: 1.0,
            corr_c_g2: Some(0.3),
            corrections: Corrections::default(),
            uncertainties: None,
        }
    }

    #[test]
    fn rule_layer_reference_points() {
        let band = DEFAULT_G2_UNITY_BAND;
        assert_eq!(
            decision_rules(&fv(1.0 / 1.1, 0.02, 1.01), band),
            Some(StateClass::SinglePhoton)
        );
        assert_eq!(decision_rules(&fv(1.0 / 1.2, 0.02, 2.0), band), None);
        assert_eq!(
            decision_rules(&fv(1.0 / 20.0, 0.02, 1.0), band),
            Some(StateClass::IncoherentDispersive)
        );
        assert_eq!(
            decision_rules(&fv(1.0 / 3.0, 0.02, 0.99), band),
            Some(StateClass::Incoherent2Mode)
        );
        // Exactly at the band edge the rule must not fire.
        assert_eq!(decision_rules(&fv(1.0, 0.02, 1.0 + band), band), None);
    }

    #[test]
    fn rule_layer_never_claims_bunched_light() {
        for mean in [0.5, 0.94, 1.06, 1.5, 2.0, 3.0] {
            for d in [0.5, 1.0, 2.0, 20.0] {
                assert_eq!(decision_rules(&fv(1.0 / d, 0.1, mean), 0.05), None);
            }
        }
    }

    fn cloud(center: [f64; 3], n: usize, spread: f64) -> Vec<FeatureVector> {
        // Deterministic low-discrepancy jitter; no rng needed.
        (0..n)
            .map(|i| {
                let t = i as f64;
                let j0 = spread * ((t * 0.754877).fract() - 0.5);
                let j1 = spread * ((t * 0.569840).fract() - 0.5);
                let j2 = spread * ((t * 0.362437).fract() - 0.5);
                fv(
                    (center[0] + j0).exp(),
                    (center[1] + j1).exp(),
                    center[2] + j2,
                )
            })
            .collect()
    }

    fn labeled(label: StateClass, feats: Vec<FeatureVector>) -> Vec<LabeledFeatures> {
        feats
            .into_iter()
            .map(|features| LabeledFeatures { label, features })
            .collect()
    }

    #[test]
    fn centroids_land_on_the_training_clouds() {
        let mut data = labeled(
            StateClass::IndistBiphoton,
            cloud([-0.7, -1.1, 3.0], 30, 0.1),
        );
        data.extend(labeled(
            StateClass::IndistSpectralBiphoton,
            cloud([-2.6, -3.4, 3.0], 30, 0.1),
        ));
        let model = fit_model(&data).unwrap();
        assert_eq!(model.classes.len(), 2);
        assert_eq!(model.version, 1);
        let c0 = &model.classes[0];
        let c1 = &model.classes[1];
        assert!(!c0.regularized && !c1.regularized);
        let (mono, spectral) = if c0.label == StateClass::IndistBiphoton {
            (c0, c1)
        } else {
            (c1, c0)
        };
        assert!((mono.centroid[0] - -0.7).abs() < 0.05);
        assert!((spectral.centroid[0] - -2.6).abs() < 0.05);
    }

    #[test]
    fn training_rejects_thin_classes_by_name() {
        let data = labeled(StateClass::Noon2, cloud([-0.7, -1.5, 3.0], 4, 0.1));
        let err = fit_model(&data).unwrap_err();
        assert!(err.to_string().contains("Noon2"));
    }

    #[test]
    fn duplicate_features_get_a_ridge() {
        let one = fv(0.5, 0.3, 3.0);
        let data: Vec<_> = (0..6)
            .map(|_| LabeledFeatures {
                label: StateClass::IndistBiphoton,
                features: one.clone(),
            })
            .collect();
        let model = fit_model(&data).unwrap();
        assert!(model.classes[0].regularized);
        let (label, score) = classify(&one, &model).unwrap();
        assert_eq!(label, StateClass::IndistBiphoton);
        assert!(score > 0.9);
    }

    #[test]
    fn exact_centroid_wins_with_high_score() {
        let mut data = labeled(StateClass::IndistBiphoton, cloud([-0.7, -1.1, 3.0], 40, 0.2));
        data.extend(labeled(
            StateClass::DistBiphoton,
            cloud([-0.7, -2.2, 3.0], 40, 0.2),
        ));
        data.extend(labeled(
            StateClass::TwoPhotonFock,
            cloud([0.0, -4.2, 2.0], 40, 0.2),
        ));
        let model = fit_model(&data).unwrap();
        let indist = model
            .classes
            .iter()
            .find(|c| c.label == StateClass::IndistBiphoton)
            .unwrap();
        let probe = fv(
            indist.centroid[0].exp(),
            indist.centroid[1].exp(),
            indist.centroid[2],
        );
        let (label, score) = classify(&probe, &model).unwrap();
        assert_eq!(label, StateClass::IndistBiphoton);
        assert!(score > 0.9, "score = {score}");
        // Determinism.
        assert_eq!(classify(&probe, &model).unwrap(), (label, score));
    }

    #[test]
    fn noiseless_visibility_gap_separates_the_biphotons() {
        let mut data = labeled(StateClass::IndistBiphoton, cloud([-0.7, -1.1, 3.0], 30, 0.15));
        data.extend(labeled(
            StateClass::DistBiphoton,
            cloud([-0.7, -2.2, 3.0], 30, 0.15),
        ));
        let model = fit_model(&data).unwrap();
        let (label, _) = classify(&fv(0.5, 1.0 / 3.0, 3.0), &model).unwrap();
        assert_eq!(label, StateClass::IndistBiphoton);
        let (label, _) = classify(&fv(0.5, 1.0 / 9.0, 3.0), &model).unwrap();
        assert_eq!(label, StateClass::DistBiphoton);
    }

    #[test]
    fn labels_survive_consistent_affine_feature_maps() {
        let centers = [
            (StateClass::IndistBiphoton, [-0.7f64, -1.1, 3.0]),
            (StateClass::DistBiphoton, [-0.7, -2.2, 3.0]),
            (StateClass::IndistSpectralBiphoton, [-2.6, -3.4, 3.0]),
        ];
        let mut train = Vec::new();
        for (label, c) in centers {
            train.extend(labeled(label, cloud(c, 25, 0.3)));
        }
        let probes: Vec<FeatureVector> = centers
            .iter()
            .flat_map(|(_, c)| cloud(*c, 7, 0.6))
            .collect();

        // Per-axis affine map applied identically at train and test time:
        // in raw feature terms v -> v^a * e^b on the visibilities and a
        // shift+scale on mean_g2 (kept away from the rule band).
        let (a, b) = ([0.6, 1.7, 1.3], [0.4, -0.2, 1.5]);
        let map = |f: &FeatureVector| -> FeatureVector {
            let p = feature_point(f).unwrap();
            fv(
                (a[0] * p[0] + b[0]).exp(),
                (a[1] * p[1] + b[1]).exp(),
                a[2] * p[2] + b[2],
            )
        };

        let model = fit_model(&train).unwrap();
        let mapped_train: Vec<LabeledFeatures> = train
            .iter()
            .map(|ex| LabeledFeatures {
                label: ex.label,
                features: map(&ex.features),
            })
            .collect();
        let mapped_model = fit_model(&mapped_train).unwrap();

        for probe in &probes {
            let (plain, _) = classify(probe, &model).unwrap();
            let (mapped, _) = classify(&map(probe), &mapped_model).unwrap();
            assert_eq!(plain, mapped);
        }
    }

    #[test]
    fn classify_requires_g2_features_and_a_trained_model() {
        let empty = ClassifierModel {
            version: 1,
            g2_unity_band: DEFAULT_G2_UNITY_BAND,
            classes: vec![],
        };
        assert!(matches!(
            classify(&fv(0.5, 0.3, 3.0), &empty),
            Err(ClassifierError::Untrained)
        ));

        let model = fit_model(&labeled(
            StateClass::IndistBiphoton,
            cloud([-0.7, -1.1, 3.0], 10, 0.1),
        ))
        .unwrap();
        let mut blind = fv(0.5, 0.3, 3.0);
        blind.v_g2 = None;
        blind.mean_g2 = None;
        assert!(matches!(
            classify(&blind, &model),
            Err(ClassifierError::MissingG2Features)
        ));
    }

    #[test]
    fn scores_stay_in_the_unit_interval() {
        let mut data = labeled(StateClass::IndistBiphoton, cloud([-0.7, -1.1, 3.0], 20, 0.2));
        data.extend(labeled(
            StateClass::DistBiphoton,
            cloud([-0.7, -2.2, 3.0], 20, 0.2),
        ));
        data.extend(labeled(
            StateClass::Noon2,
            cloud([-0.7, -1.6, 3.0], 20, 0.2),
        ));
        let model = fit_model(&data).unwrap();
        for i in 0..60 {
            let t = i as f64;
            let probe = fv(
                (0.05 + (t * 0.17).fract()).min(1.0),
                0.02 + (t * 0.29).fract(),
                1.3 + 3.0 * (t * 0.41).fract(),
            );
            let (_, score) = classify(&probe, &model).unwrap();
            assert!((0.0..=1.0).contains(&score), "score = {score}");
        }
    }
}
