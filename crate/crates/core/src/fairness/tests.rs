use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use proptest::prelude::*;

use super::*;
use crate::corpus::testutil::record;
use crate::corpus::{ActorAnnotation, AgeBracket, DetectionSource, Dimension, Gender, LabelSet, LabelSource, Level};

fn ann(id: &str, actors: u32, fv: bool, gender: Gender) -> ActorAnnotation {
    ActorAnnotation {
        video_id: id.into(),
        actor_count: actors,
        face_visible: fv,
        gender,
        age_bracket: AgeBracket::B30_40,
        detection_source: DetectionSource::Face,
        off_topic: false,
        unreadable: false,
        narration: true,
    }
}

fn both(id: &str, med: Level, und: Level) -> Vec<LabelSet> {
    vec![
        LabelSet::single(id, Dimension::Med, med, LabelSource::Human, None),
        LabelSet::single(id, Dimension::Und, und, LabelSource::Human, None),
    ]
}

fn row(id: &str, fv: bool, male: bool, med: bool, und: bool, views: u64) -> FrameRow {
    FrameRow {
        video_id: id.into(),
        fv,
        gender: if male { Gender::Male } else { Gender::Female },
        age: AgeBracket::B30_40,
        actor_count: 1,
        med,
        und,
        view_count: views,
    }
}

fn frame(rows: Vec<FrameRow>) -> RegressionFrame {
    RegressionFrame { rows }
}

// ---------------------------------------------------------------- frame

#[test]
fn funnel_matches_hand_enumeration() {
    use Level::{High, Low};
    let ids: Vec<String> = (1..=12).map(|i| format!("v{i:02}")).collect();
    let mut records: Vec<_> = ids.iter().map(|id| record(id)).collect();
    for (i, r) in records.iter_mut().enumerate() {
        r.view_count = 100 + i as u64;
    }
    records[9].view_count = 0;
    records[11].view_count = 0;
    let mut labels = Vec::new();
    for id in ids.iter().filter(|id| !matches!(id.as_str(), "v02" | "v03")) {
        labels.extend(both(id, High, Low));
    }
    labels.push(LabelSet::single("v03", Dimension::Med, High, LabelSource::Human, None));
    let mut anns = Vec::new();
    for id in ids.iter().filter(|id| id.as_str() != "v04") {
        let mut a = ann(id, 1, true, Gender::Male);
        match id.as_str() {
            "v05" => a.actor_count = 2,
            "v06" => {
                a.actor_count = 3;
                a.off_topic = true;
            }
            "v07" => a.off_topic = true,
            "v08" => {
                a.unreadable = true;
                a.gender = Gender::Unknown;
            }
            "v09" | "v12" => a.narration = false,
            _ => {}
        }
        anns.push(a);
    }
    let (f, funnel) = build_frame(&records, &labels, &anns).unwrap();
    // v01 and v11 survive; v10 is the only zero-view loss because v12
    // already left at the narration step.
    let expected = [
        (Exclusion::Unlabeled, 2),
        (Exclusion::Unannotated, 1),
        (Exclusion::MultiActor, 2),
        (Exclusion::OffTopic, 1),
        (Exclusion::Unreadable, 1),
        (Exclusion::NoNarration, 2),
        (Exclusion::ZeroViews, 1),
    ];
    assert_eq!(funnel.excluded, expected.to_vec());
    assert_eq!(funnel.total, 12);
    assert_eq!(funnel.analyzed, 2);
    assert_eq!(f.rows.iter().map(|r| r.video_id.as_str()).collect::<Vec<_>>(), ["v01", "v11"]);
    assert!(f.rows.iter().all(|r| r.med && !r.und && r.fv && r.gender == Gender::Male));
    assert!((f.rows[0].y() - 100f64.ln()).abs() < 1e-15);
}

#[test]
fn single_multi_actor_video_is_counted_once() {
    let mut records = vec![record("a"), record("b")];
    records[0].view_count = 10;
    records[1].view_count = 10;
    let mut labels = both("a", Level::High, Level::High);
    labels.extend(both("b", Level::Low, Level::High));
    let anns = vec![ann("a", 1, false, Gender::Female), ann("b", 2, true, Gender::Male)];
    let (f, funnel) = build_frame(&records, &labels, &anns).unwrap();
    assert_eq!(funnel.count(Exclusion::MultiActor), 1);
    assert_eq!(f.len(), 1);
}

#[test]
fn dangling_ids_are_errors() {
    let records = vec![record("a")];
    let err = build_frame(&records, &both("zz", Level::High, Level::High), &[]).unwrap_err();
    assert!(matches!(err, FairnessError::DanglingId(id) if id == "zz"));
    let err = build_frame(&records, &[], &[ann("zz", 1, true, Gender::Male)]).unwrap_err();
    assert!(matches!(err, FairnessError::DanglingId(id) if id == "zz"));
}

#[test]
fn crosstab_single_row_and_all_male() {
    let t = crosstab(&frame(vec![row("a", true, false, true, false, 5)])).unwrap();
    assert_eq!(t.cells.len(), 16);
    assert_eq!(t.get(true, false, Gender::Female, true), 1);
    assert_eq!(t.total(), 1);

    let rows = (0..8).map(|i| row(&format!("m{i}"), i % 2 == 0, true, i % 3 == 0, i % 4 == 0, 10)).collect();
    let t = crosstab(&frame(rows)).unwrap();
    assert_eq!(t.margin(|_, _, g, _| g == Gender::Female), 0);
    assert_eq!(t.total(), 8);
    assert!(matches!(crosstab(&RegressionFrame::default()), Err(FairnessError::EmptyFrame)));
}

#[test]
fn crosstab_twenty_rows_matches_tally() {
    // (fv, male, med, und) patterns, tallied by hand below.
    let pats = [
        (1, 1, 1, 1),
        (1, 1, 1, 1),
        (1, 1, 1, 1),
        (0, 1, 1, 1),
        (0, 1, 1, 1),
        (0, 0, 1, 1),
        (0, 0, 1, 1),
        (1, 0, 1, 1),
        (1, 1, 0, 1),
        (0, 1, 0, 1),
        (0, 0, 0, 1),
        (1, 1, 1, 0),
        (1, 1, 1, 0),
        (0, 0, 1, 0),
        (1, 0, 0, 0),
        (0, 1, 0, 0),
        (0, 1, 0, 0),
        (0, 0, 0, 0),
        (1, 1, 1, 1),
        (0, 0, 1, 1),
    ];
    let rows = pats
        .iter()
        .enumerate()
        .map(|(i, &(fv, m, med, und))| row(&format!("r{i}"), fv == 1, m == 1, med == 1, und == 1, 10))
        .collect();
    let t = crosstab(&frame(rows)).unwrap();
    let expect = [
        ((true, true, Gender::Male, true), 4),
        ((true, true, Gender::Male, false), 2),
        ((true, true, Gender::Female, false), 3),
        ((true, true, Gender::Female, true), 1),
        ((false, true, Gender::Male, true), 1),
        ((false, true, Gender::Male, false), 1),
        ((false, true, Gender::Female, false), 1),
        ((true, false, Gender::Male, true), 2),
        ((true, false, Gender::Female, false), 1),
        ((false, false, Gender::Female, true), 1),
        ((false, false, Gender::Male, false), 2),
        ((false, false, Gender::Female, false), 1),
    ];
    for ((m, u, g, f), c) in expect {
        assert_eq!(t.get(m, u, g, f), c, "{m} {u} {g:?} {f}");
    }
    assert_eq!(t.total(), 20);
    assert_eq!(expect.iter().map(|x| x.1).sum::<usize>(), 20);
}

// ---------------------------------------------------------------- pearson

/// Two-sided Student-t tail by the closed-form series for integer df.
fn t_tail_oracle(t: f64, df: u32) -> f64 {
    let theta = (t.abs() / (df as f64).sqrt()).atan();
    let (s, c) = (theta.sin(), theta.cos());
    let a = if df.is_multiple_of(2) {
        let (mut term, mut sum) = (1.0, 1.0);
        let mut k = 2;
        while k < df {
            term *= (k - 1) as f64 / k as f64 * c * c;
            sum += term;
            k += 2;
        }
        s * sum
    } else if df == 1 {
        2.0 * theta / std::f64::consts::PI
    } else {
        let (mut term, mut sum) = (1.0, 1.0);
        let mut k = 3;
        while k < df {
            term *= (k - 1) as f64 / k as f64 * c * c;
            sum += term;
            k += 2;
        }
        2.0 / std::f64::consts::PI * (theta + s * c * sum)
    };
    1.0 - a
}

#[test]
fn t_tail_matches_series_oracle() {
    for df in [1u32, 2, 3, 5, 8, 26, 41] {
        for t in [0.0, 0.3, 1.0, 2.2, 4.5] {
            let got = t_two_sided(t, df as f64);
            let want = t_tail_oracle(t, df);
            assert!((got - want).abs() < 1e-10, "df {df} t {t}: {got} vs {want}");
        }
    }
}

#[test]
fn pearson_basic_cases() {
    let x = [1.0, 2.0, 3.0];
    let c = pearson(&x, &x).unwrap();
    assert!((c.r - 1.0).abs() < 1e-15);
    let c = pearson(&x, &[3.0, 2.0, 1.0]).unwrap();
    assert!((c.r + 1.0).abs() < 1e-15);
    assert_eq!(c.p_value, 0.0);
    assert!(pearson(&x, &[2.0, 2.0, 2.0]).is_none());
}

#[test]
fn pearson_ten_rows_long_hand() {
    let x = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0];
    let y = [520.0, 80.0, 1500.0, 95.0, 30.0, 410.0, 2200.0, 15.0, 640.0, 75.0];
    // Raw-sum formula, written independently of the centered one.
    let n = 10.0;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let r = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
    let t = r * ((n - 2.0) / (1.0 - r * r)).sqrt();
    let c = pearson(&x, &y).unwrap();
    assert!((c.r - r).abs() < 1e-12);
    assert!((c.p_value - t_tail_oracle(t, 8)).abs() < 1e-10);
}

#[test]
fn pearson_matrix_shape_and_undefined_column() {
    let rows: Vec<FrameRow> =
        (0..12).map(|i| row(&format!("r{i}"), i % 2 == 0, i % 3 == 0, true, i % 5 == 0, 10 + (i * i) as u64)).collect();
    let m = pearson_matrix(&frame(rows), GenderCoding::MaleIsOne).unwrap();
    assert_eq!(m.names, ["FV", "Gender", "MED", "UND", "viewCount"]);
    for i in 0..5 {
        for j in 0..5 {
            assert_eq!(m.entries[i][j], m.entries[j][i]);
        }
    }
    // MED is constant: reported as undefined, never zero.
    assert!(m.get("MED", "FV").is_none());
    assert!(m.get("MED", "MED").is_none());
    assert!((m.get("UND", "UND").unwrap().r - 1.0).abs() < 1e-15);
    assert!(matches!(
        pearson_matrix(&frame(vec![row("a", true, true, true, true, 1)]), GenderCoding::MaleIsOne),
        Err(FairnessError::TooFewRows { .. })
    ));
}

// ---------------------------------------------------------------- glm

/// Rows with pseudo-random binary predictors and views from a known model.
fn synthetic_rows(n: usize, beta: [f64; 6], noise: f64) -> Vec<FrameRow> {
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    (0..n)
        .map(|i| {
            let bits = next();
            let (fv, male, med, und) = (bits & 1 == 1, bits & 2 == 2, bits & 4 == 4, bits & 8 == 8);
            let f = |v: bool| if v { 1.0 } else { 0.0 };
            let e = ((next() % 10_000) as f64 / 10_000.0 - 0.5) * noise;
            let y = beta[0]
                + beta[1] * f(fv)
                + beta[2] * f(male)
                + beta[3] * f(fv) * f(male)
                + beta[4] * f(med)
                + beta[5] * f(und)
                + e;
            row(&format!("s{i:03}"), fv, male, med, und, y.exp().round().max(1.0) as u64)
        })
        .collect()
}

/// Normal equations solved by Gauss-Jordan elimination with partial pivoting.
fn normal_equations(x: &DMatrix<f64>, y: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (n, p) = (x.nrows(), x.ncols());
    let mut a = vec![vec![0.0; 2 * p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            a[i][j] = (0..n).map(|k| x[(k, i)] * x[(k, j)]).sum();
        }
        a[i][p + i] = 1.0;
        a[i][2 * p] = (0..n).map(|k| x[(k, i)] * y[k]).sum();
    }
    for col in 0..p {
        let piv = (col..p).max_by(|r, s| a[*r][col].abs().total_cmp(&a[*s][col].abs())).unwrap();
        a.swap(col, piv);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v /= d;
        }
        for r in 0..p {
            if r != col {
                let f = a[r][col];
                let src = a[col].clone();
                for (v, s) in a[r].iter_mut().zip(src) {
                    *v -= f * s;
                }
            }
        }
    }
    let beta = (0..p).map(|i| a[i][2 * p]).collect();
    let inv = (0..p).map(|i| a[i][p..2 * p].to_vec()).collect();
    (beta, inv)
}

#[test]
fn glm_matches_normal_equations() {
    let rows = synthetic_rows(30, [5.0, -0.2, 0.6, 0.05, 0.15, 0.7], 1.0);
    let f = frame(rows);
    let formula = Formula::with_labels();
    let fit = fit_glm(&f, &formula, Family::Gaussian, GenderCoding::MaleIsOne).unwrap();
    let x = formula.design(&f.rows, GenderCoding::MaleIsOne);
    let y: Vec<f64> = f.rows.iter().map(FrameRow::y).collect();
    let (beta, inv) = normal_equations(&x, &y);
    let resid: Vec<f64> = (0..30).map(|i| y[i] - (0..6).map(|j| x[(i, j)] * beta[j]).sum::<f64>()).collect();
    let sigma2 = resid.iter().map(|r| r * r).sum::<f64>() / 24.0;
    for j in 0..6 {
        let c = &fit.coefficients[j];
        assert!((c.estimate - beta[j]).abs() < 1e-8, "{}", c.name);
        let se = (sigma2 * inv[j][j]).sqrt();
        assert!((c.std_error - se).abs() < 1e-8);
        let p = t_tail_oracle(beta[j] / se, 24);
        assert!((c.p_value.unwrap() - p).abs() < 1e-9, "{} {} {}", c.name, c.p_value.unwrap(), p);
    }
    assert_eq!(fit.df_residual, 24);
    assert_eq!(
        fit.coefficients.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(),
        ["(Intercept)", "FV", "Gender", "FV:Gender", "MED", "UND"]
    );
    // Residuals orthogonal to every design column.
    let eta = fit.linear_predictor(&f.rows);
    for j in 0..6 {
        let dot: f64 = (0..30).map(|i| x[(i, j)] * (y[i] - eta[i])).sum();
        assert!(dot.abs() < 1e-8, "column {j}: {dot}");
    }
}

#[test]
fn glm_exact_fit_and_intercept_only() {
    // ln(views) = 2 + 3 FV exactly.
    let rows: Vec<FrameRow> = (0..10)
        .map(|i| {
            let fv = i % 2 == 0;
            let mut r = row(&format!("e{i}"), fv, i % 3 == 0, false, false, 1);
            r.view_count = if fv { 148 } else { 7 };
            r
        })
        .collect();
    let f = frame(rows);
    let formula: Formula = "y ~ FV".parse().unwrap();
    let fit = fit_glm(&f, &formula, Family::Gaussian, GenderCoding::MaleIsOne).unwrap();
    let x = formula.design(&f.rows, GenderCoding::MaleIsOne);
    let y: Vec<f64> = f.rows.iter().map(FrameRow::y).collect();
    let (beta, _) = normal_equations(&x, &y);
    assert!((fit.coefficients[1].estimate - beta[1]).abs() < 1e-10);
    assert!(fit.dispersion < 1e-20);
    assert!(fit.coefficients[1].p_value.unwrap() < 1e-12);

    let fit = fit_glm(&f, &"y ~ 1".parse().unwrap(), Family::Gaussian, GenderCoding::MaleIsOne).unwrap();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    assert_eq!(fit.coefficients.len(), 1);
    assert!((fit.coefficients[0].estimate - mean).abs() < 1e-12);
}

#[test]
fn glm_names_collinear_column() {
    let rows: Vec<FrameRow> = (0..10).map(|i| row(&format!("c{i}"), true, i % 2 == 0, false, false, 10 + i)).collect();
    let err = fit_glm(&frame(rows), &Formula::demographic(), Family::Gaussian, GenderCoding::MaleIsOne).unwrap_err();
    assert!(matches!(err, FairnessError::Collinear(ref c) if c == "FV"), "{err}");
    let rows: Vec<FrameRow> = (0..3).map(|i| row(&format!("c{i}"), i == 0, i == 1, false, false, 10)).collect();
    assert!(matches!(
        fit_glm(&frame(rows), &Formula::demographic(), Family::Gaussian, GenderCoding::MaleIsOne),
        Err(FairnessError::TooFewRows { .. })
    ));
}

#[test]
fn gender_coding_flip_mirrors_estimates() {
    let f = frame(synthetic_rows(40, [4.0, 0.1, 0.5, 0.0, 0.0, 0.0], 1.0));
    let formula: Formula = "y ~ Gender".parse().unwrap();
    let m = fit_glm(&f, &formula, Family::Gaussian, GenderCoding::MaleIsOne).unwrap();
    let w = fit_glm(&f, &formula, Family::Gaussian, GenderCoding::FemaleIsOne).unwrap();
    assert!((m.coefficients[1].estimate + w.coefficients[1].estimate).abs() < 1e-10);
    assert!((m.coefficients[1].p_value.unwrap() - w.coefficients[1].p_value.unwrap()).abs() < 1e-10);
}

#[test]
fn poisson_satisfies_score_equations() {
    let f = frame(synthetic_rows(60, [6.0, -0.3, 0.8, 0.2, 0.1, 0.4], 1.5));
    let formula = Formula::with_labels();
    let fit = fit_glm(&f, &formula, Family::Poisson, GenderCoding::MaleIsOne).unwrap();
    let x = formula.design(&f.rows, GenderCoding::MaleIsOne);
    let mu: Vec<f64> = fit.linear_predictor(&f.rows).into_iter().map(f64::exp).collect();
    let total: f64 = f.rows.iter().map(|r| r.view_count as f64).sum();
    for j in 0..x.ncols() {
        let score: f64 = (0..f.len()).map(|i| x[(i, j)] * (f.rows[i].view_count as f64 - mu[i])).sum();
        assert!(score.abs() < 1e-6 * total, "column {j}: {score}");
    }
    assert!(fit.coefficients.iter().all(|c| c.p_value.is_some_and(|p| (0.0..=1.0).contains(&p))));
}

#[test]
fn formula_parsing() {
    let f: Formula = "y ~ FV*Gender + MED + UND".parse().unwrap();
    assert_eq!(f, Formula::with_labels());
    assert_eq!(f.to_string(), "y ~ FV + Gender + FV:Gender + MED + UND");
    let f: Formula = "y ~ FV - 1".parse().unwrap();
    assert_eq!(f.terms, [Term::Fv]);
    assert!("y ~ FV + AGE".parse::<Formula>().is_err());
}

// ---------------------------------------------------------------- slopes

fn handmade_fit(b_fv: f64, b_int: f64) -> GlmFit {
    let coef = |name: &str, estimate: f64| Coefficient {
        name: name.into(),
        estimate,
        std_error: 0.1,
        statistic: estimate / 0.1,
        p_value: Some(0.5),
    };
    GlmFit {
        family: Family::Gaussian,
        formula: Formula::demographic(),
        coding: GenderCoding::MaleIsOne,
        n: 100,
        df_residual: 96,
        coefficients: vec![coef("(Intercept)", 1.0), coef("FV", b_fv), coef("Gender", 0.6), coef("FV:Gender", b_int)],
        covariance: vec![
            vec![0.04, 0.0, 0.0, 0.0],
            vec![0.0, 0.09, 0.0, -0.02],
            vec![0.0, 0.0, 0.04, 0.0],
            vec![0.0, -0.02, 0.0, 0.16],
        ],
        dispersion: 1.0,
        iterations: 1,
    }
}

#[test]
fn simple_slopes_arithmetic() {
    let [f, m] = simple_slopes(&handmade_fit(-0.173, 0.031)).unwrap();
    assert!((f.slope + 0.173).abs() < 1e-12);
    assert!((m.slope + 0.142).abs() < 1e-12);
    assert!((f.std_error - 0.3).abs() < 1e-12);
    // 0.09 + 0.16 - 0.04
    assert!((m.std_error - 0.21f64.sqrt()).abs() < 1e-12);

    let [f, m] = simple_slopes(&handmade_fit(0.4, 0.0)).unwrap();
    assert_eq!(f.slope, m.slope);

    let mut no_int = handmade_fit(0.1, 0.1);
    no_int.formula.terms.pop();
    assert!(simple_slopes(&no_int).is_err());
}

#[test]
fn simple_slopes_from_synthetic_fit() {
    let f = frame(synthetic_rows(80, [5.0, -0.4, 0.5, 0.3, 0.0, 0.0], 0.5));
    let fit = fit_glm(&f, &Formula::demographic(), Family::Gaussian, GenderCoding::MaleIsOne).unwrap();
    let b = fit.beta();
    let [s0, s1] = simple_slopes(&fit).unwrap();
    assert!((s0.slope - b[1]).abs() < 1e-15);
    assert!((s1.slope - (b[1] + b[3])).abs() < 1e-12);
    let c = &fit.covariance;
    assert!((s1.std_error - (c[1][1] + c[3][3] + 2.0 * c[1][3]).sqrt()).abs() < 1e-12);
}

// ---------------------------------------------------------------- lasso

fn std_fixture(n: usize) -> (Standardized, Vec<String>) {
    let rows = synthetic_rows(n, [5.0, -0.2, 0.6, 0.05, 0.15, 0.7], 1.0);
    let formula = Formula { terms: vec![Term::Fv, Term::Gender, Term::FvGender, Term::Med, Term::Und] };
    let x = formula.design(&rows, GenderCoding::MaleIsOne);
    let y: Vec<f64> = rows.iter().map(FrameRow::y).collect();
    (standardize(&x, &y, &formula.names()).unwrap(), formula.names())
}

#[test]
fn standardize_moments() {
    let (s, _) = std_fixture(50);
    let n = s.x.nrows() as f64;
    for j in 0..s.x.ncols() {
        let col = s.x.column(j);
        assert!((col.sum() / n).abs() < 1e-12);
        assert!((col.norm_squared() / n - 1.0).abs() < 1e-12);
    }
    assert!(s.y.iter().sum::<f64>().abs() < 1e-9);
    let err = standardize(&DMatrix::from_element(4, 1, 1.0), &[1.0, 2.0, 3.0, 4.0], &["FV".into()]).unwrap_err();
    assert!(matches!(err, FairnessError::Collinear(c) if c == "FV"));
}

#[test]
fn lasso_zero_lambda_is_ols() {
    let (s, _) = std_fixture(60);
    let (beta, _) = coordinate_descent(&s, 0.0, None, CdSettings::default()).unwrap();
    let (ols, _) = normal_equations(&s.x, &s.y);
    for (a, b) in beta.iter().zip(&ols) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn lasso_univariate_soft_threshold() {
    // Standardized x, y = 2x: the OLS slope is 2, the lasso slope S(2, 0.5).
    let raw = [1.0, 2.0, 4.0, 7.0, 11.0, 3.0];
    let s0 = standardize(&DMatrix::from_column_slice(6, 1, &raw), &raw, &["x".into()]).unwrap();
    let y: Vec<f64> = s0.x.column(0).iter().map(|v| 2.0 * v).collect();
    let s = Standardized { y, ..s0 };
    let (beta, _) = coordinate_descent(&s, 0.5, None, CdSettings::default()).unwrap();
    assert!((beta[0] - 1.5).abs() < 1e-12);
}

#[test]
fn lasso_null_threshold() {
    let (s, _) = std_fixture(60);
    let lmax = lambda_max(&s);
    let (beta, _) = coordinate_descent(&s, lmax, None, CdSettings::default()).unwrap();
    assert!(beta.iter().all(|b| *b == 0.0));
    let (beta, _) = coordinate_descent(&s, lmax * 0.99, None, CdSettings::default()).unwrap();
    assert!(beta.iter().any(|b| *b != 0.0));
}

#[test]
fn lasso_reports_non_convergence() {
    let (s, _) = std_fixture(60);
    let err = coordinate_descent(&s, 1e-4, None, CdSettings { tol: 0.0, max_sweeps: 3 }).unwrap_err();
    assert!(matches!(err, FairnessError::NotConverged { iterations: 3, .. }));
}

#[test]
fn lasso_cv_picks_grid_minimum() {
    let f = frame(synthetic_rows(90, [5.0, -0.2, 0.6, 0.05, 0.15, 0.7], 1.0));
    let config =
        LassoConfig { lambdas: vec![0.3, 0.1, 0.03, 0.01, 0.0], folds: 5, seed: 7, settings: CdSettings::default() };
    let fit = fit_lasso(&f, &Formula::with_labels(), GenderCoding::MaleIsOne, &config).unwrap();
    assert_eq!(fit.names, ["FV", "Gender", "FV:Gender", "MED", "UND"]);
    assert_eq!(fit.lambdas, config.lambdas);
    let best = fit.cv_mse.iter().copied().fold(f64::INFINITY, f64::min);
    let k = fit.lambdas.iter().position(|l| *l == fit.best_lambda).unwrap();
    assert_eq!(fit.cv_mse[k], best);
    assert_eq!(fit.coefficients, fit.path[k]);
    // Deterministic under the seed.
    assert_eq!(fit, fit_lasso(&f, &Formula::with_labels(), GenderCoding::MaleIsOne, &config).unwrap());
    // Folds partition the rows evenly.
    let folds = fold_assignment(90, 5, 7);
    for g in 0..5 {
        assert_eq!(folds.iter().filter(|x| **x == g).count(), 18);
    }
    let bad = LassoConfig { folds: 1, ..config.clone() };
    assert!(fit_lasso(&f, &Formula::with_labels(), GenderCoding::MaleIsOne, &bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lasso_kkt_holds(n in 20usize..80, frac in 0.0f64..1.0) {
        let (s, _) = std_fixture(n);
        let lambda = lambda_max(&s) * frac;
        let (beta, _) = coordinate_descent(&s, lambda, None, CdSettings::default()).unwrap();
        prop_assert!(kkt_violation(&s, &beta, lambda) < 1e-8);
    }

    #[test]
    fn split_is_an_exact_partition(n in 1usize..120, seed in any::<u64>(), frac in 0.05f64..0.95) {
        let f = frame((0..n).map(|i| row(&format!("p{i:03}"), i % 2 == 0, i % 3 == 0, true, true, 5)).collect());
        let (train, test, d) = split(&f, frac, seed).unwrap();
        prop_assert_eq!(train.len(), d.n_train);
        prop_assert_eq!(train.len() + test.len(), n);
        prop_assert_eq!(train.len(), (frac * n as f64 - 1e-9).ceil() as usize);
        let mut ids: Vec<&str> = train.rows.iter().chain(&test.rows).map(|r| r.video_id.as_str()).collect();
        ids.sort();
        let all: Vec<&str> = f.rows.iter().map(|r| r.video_id.as_str()).collect();
        prop_assert_eq!(ids, all);
    }

    #[test]
    fn correlation_matrix_is_symmetric(bits in proptest::collection::vec(any::<u8>(), 5..40)) {
        let rows: Vec<FrameRow> = bits.iter().enumerate()
            .map(|(i, b)| row(&format!("q{i}"), b & 1 == 1, b & 2 == 2, b & 4 == 4, b & 8 == 8, 1 + *b as u64))
            .collect();
        let m = pearson_matrix(&frame(rows), GenderCoding::MaleIsOne).unwrap();
        for i in 0..5 {
            if let Some(c) = m.entries[i][i] {
                prop_assert!((c.r - 1.0).abs() < 1e-12);
            }
            for j in 0..5 {
                prop_assert_eq!(m.entries[i][j], m.entries[j][i]);
                if let Some(c) = m.entries[i][j] {
                    prop_assert!((0.0..=1.0).contains(&c.p_value));
                }
            }
        }
    }

    #[test]
    fn slopes_constant_without_interaction(b_fv in -2.0f64..2.0) {
        let [f, m] = simple_slopes(&handmade_fit(b_fv, 0.0)).unwrap();
        prop_assert_eq!(f.slope, m.slope);
    }
}

// ---------------------------------------------------------------- split

#[test]
fn split_sizes_and_seeds() {
    let f = frame((0..10).map(|i| row(&format!("x{i}"), true, true, true, true, 5)).collect());
    let (a, b, d) = split(&f, 0.7, 3).unwrap();
    assert_eq!((a.len(), b.len()), (7, 3));
    assert_eq!((d.n_train, d.n_test), (7, 3));
    assert_eq!(split(&f, 0.7, 3).unwrap().0, a);
    let f20 = frame((0..20).map(|i| row(&format!("x{i:02}"), true, true, true, true, 5)).collect());
    assert_ne!(split(&f20, 0.7, 1).unwrap().0, split(&f20, 0.7, 2).unwrap().0);
    assert!(split(&f, 1.0, 0).is_err());
    assert!(split(&f, 0.0, 0).is_err());
}

// ---------------------------------------------------------------- parity

#[test]
fn parity_identity_and_arithmetic() {
    let f = frame((0..8).map(|i| row(&format!("g{i}"), i < 2, i % 2 == 0, true, true, 5)).collect());
    let all: Vec<String> = f.rows.iter().map(|r| r.video_id.clone()).collect();
    for attr in [Attribute::Gender, Attribute::Fv, Attribute::AgeBracket] {
        let r = parity_report(&all, &f, attr).unwrap();
        assert!(r.groups.iter().all(|g| (g.ratio - 1.0).abs() < 1e-15));
        assert!((r.groups.iter().map(|g| g.recommended_share).sum::<f64>() - 1.0).abs() < 1e-15);
    }
    // g0, g2, g4 male; g1 female: 75/25 against 50/50.
    let rec: Vec<String> = ["g0", "g2", "g4", "g1"].iter().map(|s| s.to_string()).collect();
    let r = parity_report(&rec, &f, Attribute::Gender).unwrap();
    let ratio: BTreeMap<&str, f64> = r.groups.iter().map(|g| (g.group.as_str(), g.ratio)).collect();
    assert_eq!(ratio["male"], 1.5);
    assert_eq!(ratio["female"], 0.5);
    assert!(matches!(parity_report(&[], &f, Attribute::Gender), Err(FairnessError::EmptyRecommendation)));
    assert!(matches!(parity_report(&["nope".into()], &f, Attribute::Gender), Err(FairnessError::DanglingId(_))));
}

fn cand(id: &str, score: f64, group: Option<&str>) -> Candidate {
    Candidate { video_id: id.into(), und_score: score, med_score: 0.0, view_count: 0, group: group.map(String::from) }
}

fn shares(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(g, p)| (g.to_string(), *p)).collect()
}

/// Every prefix, recomputed from scratch.
/// Per prefix: (within bounds, some count vector meets the bounds, some
/// count vector the pool can supply meets the bounds).
fn brute_force_prefixes(
    ranked: &[String],
    pool: &[Candidate],
    shares: &BTreeMap<String, f64>,
    delta: f64,
) -> Vec<(bool, bool, bool)> {
    let group: BTreeMap<&str, Option<&str>> = pool.iter().map(|c| (c.video_id.as_str(), c.group.as_deref())).collect();
    let supply = |g: &str| pool.iter().filter(|c| c.group.as_deref() == Some(g)).count();
    (1..=ranked.len())
        .map(|m| {
            let prefix: Vec<&str> = ranked[..m].iter().filter_map(|id| group[id.as_str()]).collect();
            let known = prefix.len();
            if known == 0 {
                return (true, true, true);
            }
            let within = shares.iter().all(|(g, p)| {
                let share = prefix.iter().filter(|x| **x == g.as_str()).count() as f64 / known as f64;
                let ratio = share / p;
                ratio >= 1.0 - delta - 1e-9 && ratio <= 1.0 + delta + 1e-9
            });
            // Any integer count vector of size `known` meeting the bounds?
            let names: Vec<&String> = shares.keys().collect();
            let (mut feasible, mut attainable) = (false, false);
            let mut counts = vec![0usize; names.len()];
            loop {
                if counts.iter().sum::<usize>() == known
                    && names.iter().zip(&counts).all(|(g, c)| {
                        let r = *c as f64 / known as f64 / shares[*g];
                        r >= 1.0 - delta - 1e-9 && r <= 1.0 + delta + 1e-9
                    })
                {
                    feasible = true;
                    if names.iter().zip(&counts).all(|(g, c)| *c <= supply(g)) {
                        attainable = true;
                        break;
                    }
                }
                let mut i = 0;
                while i < counts.len() {
                    counts[i] += 1;
                    if counts[i] <= known {
                        break;
                    }
                    counts[i] = 0;
                    i += 1;
                }
                if i == counts.len() {
                    break;
                }
            }
            (within, feasible, attainable)
        })
        .collect()
}

#[test]
fn rerank_infinite_delta_is_base_order() {
    let pool: Vec<Candidate> = (0..12)
        .map(|i| cand(&format!("c{i:02}"), (i * 7 % 12) as f64, Some(if i % 4 == 0 { "b" } else { "a" })))
        .collect();
    let sh = shares(&[("a", 0.5), ("b", 0.5)]);
    let cfg = FairnessConfig { attribute: Attribute::Gender, delta: f64::INFINITY };
    let rec = rerank(&pool, &sh, cfg, 12).unwrap();
    let mut base = pool.clone();
    base.sort_by(base_order);
    assert_eq!(rec.ranked, base.iter().map(|c| c.video_id.clone()).collect::<Vec<_>>());
    assert_eq!(rec.violations(), 0);
}

#[test]
fn rerank_two_groups_within_bounds() {
    // Base order puts all of group a first.
    let pool: Vec<Candidate> =
        (0..20).map(|i| cand(&format!("c{i:02}"), 100.0 - i as f64, Some(if i < 12 { "a" } else { "b" }))).collect();
    let sh = shares(&[("a", 0.5), ("b", 0.5)]);
    let cfg = FairnessConfig { attribute: Attribute::Gender, delta: 0.2 };
    let rec = rerank(&pool, &sh, cfg, 10).unwrap();
    assert_eq!(rec.ranked.len(), 10);
    let brute = brute_force_prefixes(&rec.ranked, &pool, &sh, 0.2);
    for (m, (within, feasible, attainable)) in brute.iter().enumerate() {
        assert!(*within || !*attainable, "prefix {} violates attainable bounds", m + 1);
        let status = rec.prefixes[m].status;
        assert_eq!(status == PrefixStatus::Within, *within);
        assert_eq!(status == PrefixStatus::Infeasible, !*within && !*feasible);
        assert_eq!(status == PrefixStatus::Exhausted, !*within && *feasible && !*attainable);
    }
    assert_eq!(rec.violations(), 0);
    // Odd prefixes of a 50/50 split cannot meet +-20%; they are reported.
    assert!(rec.notes.iter().any(|n| n.contains("unattainable")));
}

#[test]
fn rerank_single_group_pool_keeps_base_order() {
    let pool: Vec<Candidate> = (0..6).map(|i| cand(&format!("c{i}"), i as f64, Some("a"))).collect();
    let sh = shares(&[("a", 0.6), ("b", 0.4)]);
    let rec = rerank(&pool, &sh, FairnessConfig { attribute: Attribute::Gender, delta: 0.2 }, 6).unwrap();
    assert_eq!(rec.ranked, ["c5", "c4", "c3", "c2", "c1", "c0"]);
    assert!(rec.notes.iter().any(|n| n.contains("no candidate in group b")));
}

#[test]
fn rerank_empty_pool_and_bad_k() {
    let sh = shares(&[("a", 1.0)]);
    let rec = rerank(&[], &sh, FairnessConfig::default(), 3).unwrap();
    assert!(rec.ranked.is_empty());
    assert!(!rec.notes.is_empty());
    assert!(rerank(&[], &sh, FairnessConfig::default(), 0).is_err());
}

#[test]
fn recommend_uses_doubly_high_rows() {
    let rows = vec![
        row("a", true, true, true, true, 50),
        row("b", false, false, true, true, 500),
        row("c", true, false, true, false, 90),
        row("d", false, true, false, true, 10),
    ];
    let f = frame(rows);
    let scores: BTreeMap<String, (f64, f64)> = [("a".to_string(), (0.9, 0.8)), ("b".to_string(), (0.1, 0.8))].into();
    let rec = recommend(&f, &scores, FairnessConfig { attribute: Attribute::Gender, delta: f64::INFINITY }, 5).unwrap();
    // Tied UND score; MED score breaks the tie.
    assert_eq!(rec.ranked, ["a", "b"]);
    assert_eq!(rec.candidates, 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rerank_output_is_candidate_subset_without_violations(
        groups in proptest::collection::vec(0u8..4, 1..30),
        scores in proptest::collection::vec(0u8..5, 30),
        k in 1usize..30,
        delta_pct in 0u32..60,
        p_a in 0.2f64..0.8,
    ) {
        let pool: Vec<Candidate> = groups.iter().enumerate().map(|(i, g)| {
            let group = match g { 0 | 1 => Some("a"), 2 => Some("b"), _ => None };
            cand(&format!("c{i:02}"), scores[i] as f64, group)
        }).collect();
        let sh = shares(&[("a", p_a), ("b", 1.0 - p_a)]);
        let delta = delta_pct as f64 / 100.0;
        let rec = rerank(&pool, &sh, FairnessConfig { attribute: Attribute::Gender, delta }, k).unwrap();
        let ids: BTreeSet<&str> = pool.iter().map(|c| c.video_id.as_str()).collect();
        let out: BTreeSet<&str> = rec.ranked.iter().map(String::as_str).collect();
        prop_assert_eq!(out.len(), rec.ranked.len());
        prop_assert!(out.is_subset(&ids));
        prop_assert_eq!(rec.ranked.len(), k.min(pool.len()));
        let brute = brute_force_prefixes(&rec.ranked, &pool, &sh, delta);
        for (m, (within, feasible, attainable)) in brute.iter().enumerate() {
            let status = rec.prefixes[m].status;
            prop_assert_eq!(status == PrefixStatus::Within, *within, "prefix {}", m + 1);
            prop_assert_eq!(status == PrefixStatus::Infeasible, !*within && !*feasible, "prefix {}", m + 1);
            prop_assert_eq!(status == PrefixStatus::Exhausted, !*within && *feasible && !*attainable, "prefix {}", m + 1);
        }
        prop_assert_eq!(rec.violations(), 0);
    }
}
