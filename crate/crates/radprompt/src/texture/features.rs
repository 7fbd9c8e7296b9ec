//! Derived features for each texture matrix kind.
//!
//! Entropies use log base 2. Degenerate limits are fixed constants so outputs
//! never contain NaN or infinity: ratios with zero denominators evaluate to 0
//! (correlation, imc1, busyness, strength, ...) and NGTDM coarseness is
//! capped at 1e6 when the denominator vanishes.

use super::{MatrixKind, TextureMatrix};

pub type FeatureValues = Vec<(&'static str, f64)>;

/// Coarseness cap when sum(p_i s_i) = 0 (flat region).
pub const COARSENESS_CAP: f64 = 1e6;

#[inline]
fn plog2(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

#[inline]
fn safe_div(num: f64, den: f64) -> f64 {
    if den != 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn matrix_features(m: &TextureMatrix) -> FeatureValues {
    match m.kind {
        MatrixKind::Glcm => glcm_features(m),
        MatrixKind::Glrlm => run_like_features(m, GLRLM_NAMES, m.n_pixels * m.n_directions),
        MatrixKind::Glszm => run_like_features(m, GLSZM_NAMES, m.n_pixels),
        MatrixKind::Ngtdm => ngtdm_features(m),
        MatrixKind::Gldm => gldm_features(m),
    }
}

pub const GLCM_FEATURE_COUNT: usize = 24;
pub const GLRLM_FEATURE_COUNT: usize = 16;
pub const GLSZM_FEATURE_COUNT: usize = 16;
pub const NGTDM_FEATURE_COUNT: usize = 5;
pub const GLDM_FEATURE_COUNT: usize = 14;

pub fn feature_names(kind: MatrixKind) -> Vec<&'static str> {
    match kind {
        MatrixKind::Glcm => GLCM_NAMES.to_vec(),
        MatrixKind::Glrlm => GLRLM_NAMES.iter().map(|n| n.0).collect(),
        MatrixKind::Glszm => GLSZM_NAMES.iter().map(|n| n.0).collect(),
        MatrixKind::Ngtdm => NGTDM_NAMES.to_vec(),
        MatrixKind::Gldm => GLDM_NAMES.to_vec(),
    }
}

const GLCM_NAMES: [&str; GLCM_FEATURE_COUNT] = [
    "autocorrelation",
    "joint_average",
    "cluster_prominence",
    "cluster_shade",
    "cluster_tendency",
    "contrast",
    "correlation",
    "difference_average",
    "difference_entropy",
    "difference_variance",
    "joint_energy",
    "joint_entropy",
    "imc1",
    "imc2",
    "idm",
    "idmn",
    "id",
    "idn",
    "inverse_variance",
    "maximum_probability",
    "sum_average",
    "sum_entropy",
    "sum_squares",
    "sum_variance",
];

fn glcm_features(m: &TextureMatrix) -> FeatureValues {
    let ng = m.rows;
    let p = m.normalized();
    let at = |i: usize, j: usize| p[i * ng + j];

    let mut px = vec![0.0; ng];
    let mut py = vec![0.0; ng];
    let mut p_sum = vec![0.0; 2 * ng - 1]; // index k-2, k = i+j in [2, 2ng]
    let mut p_diff = vec![0.0; ng]; // index |i-j|
    for i in 0..ng {
        for j in 0..ng {
            let v = at(i, j);
            px[i] += v;
            py[j] += v;
            p_sum[i + j] += v;
            p_diff[i.abs_diff(j)] += v;
        }
    }
    // gray values are bin indices starting at 1
    let gv = |i: usize| (i + 1) as f64;
    let mu_x: f64 = (0..ng).map(|i| gv(i) * px[i]).sum();
    let mu_y: f64 = (0..ng).map(|j| gv(j) * py[j]).sum();
    let sig_x: f64 = (0..ng).map(|i| (gv(i) - mu_x).powi(2) * px[i]).sum::<f64>().sqrt();
    let sig_y: f64 = (0..ng).map(|j| (gv(j) - mu_y).powi(2) * py[j]).sum::<f64>().sqrt();

    let mut autocorrelation = 0.0;
    let mut cluster_prominence = 0.0;
    let mut cluster_shade = 0.0;
    let mut cluster_tendency = 0.0;
    let mut contrast = 0.0;
    let mut joint_energy = 0.0;
    let mut joint_entropy = 0.0;
    let mut idm = 0.0;
    let mut idmn = 0.0;
    let mut id = 0.0;
    let mut idn = 0.0;
    let mut inverse_variance = 0.0;
    let mut maximum_probability = 0.0f64;
    let mut sum_squares = 0.0;
    let mut hxy1 = 0.0;
    let mut corr_num = 0.0;
    for i in 0..ng {
        for j in 0..ng {
            let v = at(i, j);
            let (a, b) = (gv(i), gv(j));
            autocorrelation += a * b * v;
            let centered = a + b - mu_x - mu_y;
            cluster_prominence += centered.powi(4) * v;
            cluster_shade += centered.powi(3) * v;
            cluster_tendency += centered.powi(2) * v;
            contrast += (a - b).powi(2) * v;
            joint_energy += v * v;
            joint_entropy -= plog2(v);
            let d2 = (a - b).powi(2);
            let dabs = (a - b).abs();
            idm += v / (1.0 + d2);
            idmn += v / (1.0 + d2 / (ng as f64 * ng as f64));
            id += v / (1.0 + dabs);
            idn += v / (1.0 + dabs / ng as f64);
            if i != j {
                inverse_variance += v / d2;
            }
            maximum_probability = maximum_probability.max(v);
            sum_squares += (a - mu_x).powi(2) * v;
            corr_num += a * b * v;
            if v > 0.0 && px[i] > 0.0 && py[j] > 0.0 {
                hxy1 -= v * (px[i] * py[j]).log2();
            }
        }
    }
    let correlation = safe_div(corr_num - mu_x * mu_y, sig_x * sig_y);

    let difference_average: f64 = (0..ng).map(|k| k as f64 * p_diff[k]).sum();
    let difference_entropy: f64 = -p_diff.iter().map(|&v| plog2(v)).sum::<f64>();
    let difference_variance: f64 = (0..ng)
        .map(|k| (k as f64 - difference_average).powi(2) * p_diff[k])
        .sum();

    // sum index k runs over gray-value sums 2..=2ng
    let sum_average: f64 = (0..p_sum.len()).map(|k| (k + 2) as f64 * p_sum[k]).sum();
    let sum_entropy: f64 = -p_sum.iter().map(|&v| plog2(v)).sum::<f64>();
    let sum_variance: f64 = (0..p_sum.len())
        .map(|k| ((k + 2) as f64 - sum_average).powi(2) * p_sum[k])
        .sum();

    let hx: f64 = -px.iter().map(|&v| plog2(v)).sum::<f64>();
    let hy: f64 = -py.iter().map(|&v| plog2(v)).sum::<f64>();
    let mut hxy2 = 0.0;
    for i in 0..ng {
        for j in 0..ng {
            let q = px[i] * py[j];
            hxy2 -= plog2(q);
        }
    }
    let imc1 = safe_div(joint_entropy - hxy1, hx.max(hy));
    let imc2 = {
        let arg = 1.0 - (-2.0 * (hxy2 - joint_entropy)).exp();
        if arg > 0.0 {
            arg.sqrt()
        } else {
            0.0
        }
    };

    vec![
        ("autocorrelation", autocorrelation),
        ("joint_average", mu_x),
        ("cluster_prominence", cluster_prominence),
        ("cluster_shade", cluster_shade),
        ("cluster_tendency", cluster_tendency),
        ("contrast", contrast),
        ("correlation", correlation),
        ("difference_average", difference_average),
        ("difference_entropy", difference_entropy),
        ("difference_variance", difference_variance),
        ("joint_energy", joint_energy),
        ("joint_entropy", joint_entropy),
        ("imc1", imc1),
        ("imc2", imc2),
        ("idm", idm),
        ("idmn", idmn),
        ("id", id),
        ("idn", idn),
        ("inverse_variance", inverse_variance),
        ("maximum_probability", maximum_probability),
        ("sum_average", sum_average),
        ("sum_entropy", sum_entropy),
        ("sum_squares", sum_squares),
        ("sum_variance", sum_variance),
    ]
}

// Entries are (name, weight exponent for gray value, weight exponent for
// size/length) describing the emphasis family shared by GLRLM and GLSZM;
// features with both exponents zero are computed explicitly.
const GLRLM_NAMES: [(&str, i32, i32); 16] = [
    ("short_run_emphasis", 0, -2),
    ("long_run_emphasis", 0, 2),
    ("gray_level_nonuniformity", 0, 0),
    ("gray_level_nonuniformity_normalized", 0, 0),
    ("run_length_nonuniformity", 0, 0),
    ("run_length_nonuniformity_normalized", 0, 0),
    ("run_percentage", 0, 0),
    ("gray_level_variance", 0, 0),
    ("run_variance", 0, 0),
    ("run_entropy", 0, 0),
    ("low_gray_level_run_emphasis", -2, 0),
    ("high_gray_level_run_emphasis", 2, 0),
    ("short_run_low_gray_level_emphasis", -2, -2),
    ("short_run_high_gray_level_emphasis", 2, -2),
    ("long_run_low_gray_level_emphasis", -2, 2),
    ("long_run_high_gray_level_emphasis", 2, 2),
];

const GLSZM_NAMES: [(&str, i32, i32); 16] = [
    ("small_area_emphasis", 0, -2),
    ("large_area_emphasis", 0, 2),
    ("gray_level_nonuniformity", 0, 0),
    ("gray_level_nonuniformity_normalized", 0, 0),
    ("size_zone_nonuniformity", 0, 0),
    ("size_zone_nonuniformity_normalized", 0, 0),
    ("zone_percentage", 0, 0),
    ("gray_level_variance", 0, 0),
    ("zone_variance", 0, 0),
    ("zone_entropy", 0, 0),
    ("low_gray_level_zone_emphasis", -2, 0),
    ("high_gray_level_zone_emphasis", 2, 0),
    ("small_area_low_gray_level_emphasis", -2, -2),
    ("small_area_high_gray_level_emphasis", 2, -2),
    ("large_area_low_gray_level_emphasis", -2, 2),
    ("large_area_high_gray_level_emphasis", 2, 2),
];

/// Shared feature family over matrices indexed (gray level, run length or
/// zone size). `np_total` is the denominator of the percentage feature.
fn run_like_features(m: &TextureMatrix, names: [(&'static str, i32, i32); 16], np_total: usize) -> FeatureValues {
    let total = m.total();
    let weighted = |ge: i32, se: i32| -> f64 {
        let mut acc = 0.0;
        for i in 0..m.rows {
            for l in 0..m.cols {
                let v = m.get(i, l);
                if v == 0.0 {
                    continue;
                }
                let g = (i + 1) as f64;
                let s = (l + 1) as f64;
                acc += v * g.powi(ge) * s.powi(se);
            }
        }
        safe_div(acc, total)
    };

    let mut gray_marginal = vec![0.0; m.rows];
    let mut size_marginal = vec![0.0; m.cols];
    for i in 0..m.rows {
        for l in 0..m.cols {
            let v = m.get(i, l);
            gray_marginal[i] += v;
            size_marginal[l] += v;
        }
    }
    let gln = safe_div(gray_marginal.iter().map(|v| v * v).sum::<f64>(), total);
    let glnn = safe_div(gln, total);
    let sln = safe_div(size_marginal.iter().map(|v| v * v).sum::<f64>(), total);
    let slnn = safe_div(sln, total);
    let percentage = safe_div(total, np_total as f64);

    let p = m.normalized();
    let mut mu_g = 0.0;
    let mut mu_s = 0.0;
    for i in 0..m.rows {
        for l in 0..m.cols {
            let v = p[i * m.cols + l];
            mu_g += (i + 1) as f64 * v;
            mu_s += (l + 1) as f64 * v;
        }
    }
    let mut var_g = 0.0;
    let mut var_s = 0.0;
    let mut entropy = 0.0;
    for i in 0..m.rows {
        for l in 0..m.cols {
            let v = p[i * m.cols + l];
            var_g += ((i + 1) as f64 - mu_g).powi(2) * v;
            var_s += ((l + 1) as f64 - mu_s).powi(2) * v;
            entropy -= plog2(v);
        }
    }

    let value_for = |idx: usize| -> f64 {
        let (_, ge, se) = names[idx];
        match idx {
            0 | 1 | 10..=15 => weighted(ge, se),
            2 => gln,
            3 => glnn,
            4 => sln,
            5 => slnn,
            6 => percentage,
            7 => var_g,
            8 => var_s,
            9 => entropy,
            _ => unreachable!(),
        }
    };
    (0..16).map(|i| (names[i].0, value_for(i))).collect()
}

const NGTDM_NAMES: [&str; NGTDM_FEATURE_COUNT] =
    ["coarseness", "contrast", "busyness", "complexity", "strength"];

fn ngtdm_features(m: &TextureMatrix) -> FeatureValues {
    let ng = m.rows;
    let n = |i: usize| m.get(i, 0);
    let p = |i: usize| m.get(i, 1);
    let s = |i: usize| m.get(i, 2);
    let nvp: f64 = (0..ng).map(n).sum();
    let ngp = (0..ng).filter(|&i| n(i) > 0.0).count() as f64;

    let ps_sum: f64 = (0..ng).map(|i| p(i) * s(i)).sum();
    let coarseness = if ps_sum != 0.0 {
        (1.0 / ps_sum).min(COARSENESS_CAP)
    } else {
        COARSENESS_CAP
    };

    let contrast = if ngp > 1.0 && nvp > 0.0 {
        let mut pair = 0.0;
        for i in 0..ng {
            for j in 0..ng {
                pair += p(i) * p(j) * ((i as f64) - (j as f64)).powi(2);
            }
        }
        pair / (ngp * (ngp - 1.0)) * ((0..ng).map(s).sum::<f64>() / nvp)
    } else {
        0.0
    };

    let mut busy_den = 0.0;
    let mut complexity = 0.0;
    let mut strength_num = 0.0;
    for i in 0..ng {
        if p(i) == 0.0 {
            continue;
        }
        for j in 0..ng {
            if p(j) == 0.0 {
                continue;
            }
            let gi = (i + 1) as f64;
            let gj = (j + 1) as f64;
            busy_den += (gi * p(i) - gj * p(j)).abs();
            complexity += (gi - gj).abs() * (p(i) * s(i) + p(j) * s(j)) / (p(i) + p(j));
            strength_num += (p(i) + p(j)) * (gi - gj).powi(2);
        }
    }
    let busyness = safe_div(ps_sum, busy_den);
    let complexity = safe_div(complexity, nvp);
    let s_sum: f64 = (0..ng).map(s).sum();
    let strength = safe_div(strength_num, s_sum);

    vec![
        ("coarseness", coarseness),
        ("contrast", contrast),
        ("busyness", busyness),
        ("complexity", complexity),
        ("strength", strength),
    ]
}

const GLDM_NAMES: [&str; GLDM_FEATURE_COUNT] = [
    "small_dependence_emphasis",
    "large_dependence_emphasis",
    "gray_level_nonuniformity",
    "dependence_nonuniformity",
    "dependence_nonuniformity_normalized",
    "gray_level_variance",
    "dependence_variance",
    "dependence_entropy",
    "low_gray_level_emphasis",
    "high_gray_level_emphasis",
    "small_dependence_low_gray_level_emphasis",
    "small_dependence_high_gray_level_emphasis",
    "large_dependence_low_gray_level_emphasis",
    "large_dependence_high_gray_level_emphasis",
];

/// Dependence size d = k + 1 (the center pixel counts itself), so d >= 1 and
/// the emphasis ratios are always defined.
fn gldm_features(m: &TextureMatrix) -> FeatureValues {
    let total = m.total();
    let weighted = |ge: i32, de: i32| -> f64 {
        let mut acc = 0.0;
        for i in 0..m.rows {
            for k in 0..m.cols {
                let v = m.get(i, k);
                if v == 0.0 {
                    continue;
                }
                let g = (i + 1) as f64;
                let d = (k + 1) as f64;
                acc += v * g.powi(ge) * d.powi(de);
            }
        }
        safe_div(acc, total)
    };
    let mut gray_marginal = vec![0.0; m.rows];
    let mut dep_marginal = vec![0.0; m.cols];
    for i in 0..m.rows {
        for k in 0..m.cols {
            let v = m.get(i, k);
            gray_marginal[i] += v;
            dep_marginal[k] += v;
        }
    }
    let gln = safe_div(gray_marginal.iter().map(|v| v * v).sum::<f64>(), total);
    let dn = safe_div(dep_marginal.iter().map(|v| v * v).sum::<f64>(), total);
    let dnn = safe_div(dn, total);

    let p = m.normalized();
    let mut mu_g = 0.0;
    let mut mu_d = 0.0;
    for i in 0..m.rows {
        for k in 0..m.cols {
            let v = p[i * m.cols + k];
            mu_g += (i + 1) as f64 * v;
            mu_d += (k + 1) as f64 * v;
        }
    }
    let mut var_g = 0.0;
    let mut var_d = 0.0;
    let mut entropy = 0.0;
    for i in 0..m.rows {
        for k in 0..m.cols {
            let v = p[i * m.cols + k];
            var_g += ((i + 1) as f64 - mu_g).powi(2) * v;
            var_d += ((k + 1) as f64 - mu_d).powi(2) * v;
            entropy -= plog2(v);
        }
    }

    vec![
        ("small_dependence_emphasis", weighted(0, -2)),
        ("large_dependence_emphasis", weighted(0, 2)),
        ("gray_level_nonuniformity", gln),
        ("dependence_nonuniformity", dn),
        ("dependence_nonuniformity_normalized", dnn),
        ("gray_level_variance", var_g),
        ("dependence_variance", var_d),
        ("dependence_entropy", entropy),
        ("low_gray_level_emphasis", weighted(-2, 0)),
        ("high_gray_level_emphasis", weighted(2, 0)),
        ("small_dependence_low_gray_level_emphasis", weighted(-2, -2)),
        ("small_dependence_high_gray_level_emphasis", weighted(2, -2)),
        ("large_dependence_low_gray_level_emphasis", weighted(-2, 2)),
        ("large_dependence_high_gray_level_emphasis", weighted(2, 2)),
    ]
}
