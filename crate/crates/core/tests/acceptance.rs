//! Acceptance criteria, run in order on one thread so the timed training
//! criteria do not compete for cores. Prints one PASS/FAIL line each and
//! exits non-zero if any fails.

mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;
use relrank::candidates::{CandidateIndex, FallbackPolicy};
use relrank::corpus::{generate_synthetic, parse_tacred, relation_counts, SynthConfig};
use relrank::encoder::{EncoderConfig, BOS_ID, EOS_ID, PAD_ID, SEP_ID};
use relrank::eval::{
    ablation_matrix, bucket_macro_f1, default_cells, micro_prf, BucketMode, TAIL_RATIOS, TOP_RATIOS,
};
use relrank::ranker::{
    contrastive_loss, loss_grads, predict_index, scores_from_logits, softmax, ScoringHead,
};
use relrank::templates::{drp_for, render_markers};
use relrank::trainer::{Experiment, RunSummary, Timing};
use relrank::{
    Dataset, EncoderParams, EntityType, Example, MarkerStyle, PromptStyle, RelationLabel,
    RelationRegistry, Span, TemplateConfig,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

const REFERENCE_DESCRIPTIONS: [(&str, &str); 46] = [
    ("org:founded-by", "subject organization is founded by object person"),
    ("org:top-members", "object person is/are the top members/employees of subject organization"),
    ("per:employee-of", "subject person is/are employed by object organization"),
    ("per:schools-attended", "object school was where subject person attended"),
    ("org:alternate-names", "object name is an alias of subject organization"),
    ("org:member-of", "subject organization is a member of object organization/country/state/province"),
    ("org:members", "subject organization has object organization/country/state/province as one of its members"),
    ("org:parents", "subject organization belongs to object organization/country/state/province"),
    ("org:subsidiaries", "object organization/country/state/province belongs to subject organization"),
    ("org:shareholders", "object organization/person is a shareholder of subject organization"),
    ("per:cities-of-residence", "subject person lives in object city"),
    ("per:city-of-death", "subject person died in object city"),
    ("per:city-of-birth", "subject person was born in object city"),
    ("per:children", "object person is a child of subject person"),
    ("per:siblings", "subject person and object person are siblings"),
    ("per:spouse", "subject person and object person are married"),
    ("per:other-family", "subject people come from different families"),
    ("per:alternate-names", "object name is an alias of subject person"),
    ("per:parents", "object person is parent of subject person"),
    ("per:title", "object designation is the job title of subject person"),
    ("per:religion", "object religious belief is the religion of subject person"),
    ("per:age", "object num is the age of subject person"),
    ("org:website", "object url link is the website of subject organization"),
    ("per:stateorprovinces-of-residence", "subject person lives in object state/province"),
    ("per:stateorprovince-of-birth", "subject person was born in object state/province"),
    ("per:stateorprovince-of-death", "subject person died in object state/province"),
    ("per:countries-of-residence", "subject person lives in object country"),
    ("per:origin", "subject person come from object country"),
    ("per:country-of-birth", "subject person was born in object country"),
    ("per:country-of-death", "subject person died in object country"),
    ("org:city-of-headquarters", "the head-quarter of subject organization locates in object city"),
    ("org:country-of-headquarters", "the head-quarter of subject organization locates in object country"),
    ("org:stateorprovince-of-headquarters", "the head-quarter of subject organization locates in object state/province"),
    ("org:number-of-employees/members", "object number is how many employees/members of subject organization"),
    ("org:political/religious-affiliation", "object political/religious-affiliation is political/religious orientation of subject organization"),
    ("org:dissolved", "object date was when subject organization was dissolved"),
    ("org:founded", "object date was when subject organization was founded"),
    ("per:date-of-death", "object date was when subject person died"),
    ("per:date-of-birth", "object date was when subject person was born"),
    ("per:cause-of-death", "object reason is what lead to subject person 's death"),
    ("per:charges", "object reason is why subject person was sentenced"),
    ("org:city-of-branch", "the branch of subject organization locates in object city"),
    ("org:stateorprovince-of-branch", "the branch of subject organization locates in object state/province"),
    ("org:country-of-branch", "the branch of subject organization locates in object country"),
    ("per:identity", "the subject person and the object person are the same person"),
    ("no-relation", "there is no relation between subject and object"),
];

fn sharpton() -> Example {
    let tokens = "Sharpton is president of the National Action Network ."
        .split(' ')
        .map(String::from)
        .collect();
    Example::new(
        "sharpton",
        tokens,
        Span::new(5, 7),
        EntityType::new("ORGANIZATION"),
        Span::new(0, 0),
        EntityType::new("PERSON"),
        RelationLabel::relation("org:top_members/employees"),
    )
    .unwrap()
}

fn template_fidelity() -> Outcome {
    let ex = sharpton();
    let tem = render_markers(&ex, MarkerStyle::Tem)
        .map_err(|e| e.to_string())?
        .detokenized();
    let iem = render_markers(&ex, MarkerStyle::Iem)
        .map_err(|e| e.to_string())?
        .detokenized();
    let want_tem =
        "# ^ person ^ Sharpton # is president of the @ * organization * National Action Network @.";
    let want_iem = "[u3] Sharpton (object person) [u4] is president of the [u1] National Action Network (subject organization) [u2].";
    check(
        normalize(&tem) == normalize(want_tem),
        format!("TEM: {tem:?}"),
    )?;
    check(
        normalize(&iem) == normalize(want_iem),
        format!("IEM: {iem:?}"),
    )?;

    // The worked DRP example, composed from its own description row. The
    // description row breaks a line inside "member /employees", so compare
    // with whitespace removed.
    let desc = "object person is/are the top member /employees of subject organization.";
    let want_drp = "There is a relation between subject and object: object person is/are the top member/employees of subject organization.";
    let one = RelationRegistry::from_entries([("org:top_members/employees", desc)])
        .map_err(|e| e.to_string())?;
    let label = RelationLabel::relation("org:top_members/employees");
    let drp = drp_for(&one, &label, PromptStyle::Drp).map_err(|e| e.to_string())?;
    let squash = |s: &str| s.split_whitespace().collect::<String>();
    check(squash(&drp) == squash(want_drp), format!("DRP: {drp:?}"))?;
    check(
        drp.starts_with("There is a relation between subject and object: "),
        "DRP prefix",
    )?;

    let shipped = RelationRegistry::shipped();
    check(
        shipped.len() == 45,
        format!("{} shipped relations", shipped.len()),
    )?;
    for (raw, want) in REFERENCE_DESCRIPTIONS.iter().take(45) {
        let label = shipped.resolve(raw).map_err(|e| format!("{raw}: {e}"))?;
        let got = shipped.description(&label).map_err(|e| e.to_string())?;
        check(got == *want, format!("{raw}: {got:?}"))?;
    }
    check(
        shipped.na_description() == Some(REFERENCE_DESCRIPTIONS[45].1),
        "no-relation row",
    )?;
    let founded = drp_for(
        &shipped,
        &shipped.resolve("org:founded_by").unwrap(),
        PromptStyle::Drp,
    )
    .unwrap();
    check(
        founded == "There is a relation between subject and object: subject organization is founded by object person",
        format!("founded_by DRP: {founded:?}"),
    )?;
    check(
        drp_for(&shipped, &RelationLabel::Na, PromptStyle::Drp).unwrap()
            == "There is no relation between subject and object.",
        "NA prompt",
    )?;
    Ok("marker styles, worked DRP, 45 descriptions + no-relation row".into())
}

fn brute_force_soundness(train: &[Example], registry: &RelationRegistry) -> Result<usize, String> {
    let index = CandidateIndex::build(train, registry, FallbackPolicy::FullSet);
    let mut triples = std::collections::BTreeSet::new();
    for ex in train {
        if !ex.gold.is_na() {
            triples.insert((
                ex.subj_type.as_str().to_string(),
                ex.obj_type.as_str().to_string(),
                ex.gold.id().to_string(),
            ));
        }
    }
    let mut from_index = std::collections::BTreeSet::new();
    for (pair, rels) in index.pairs() {
        for r in rels {
            from_index.insert((
                pair.subj_type.as_str().to_string(),
                pair.obj_type.as_str().to_string(),
                r.id().to_string(),
            ));
        }
    }
    check(
        triples == from_index,
        "index differs from distinct-triple scan",
    )?;
    for ex in train {
        check(
            index.for_example(ex).relations.contains(&ex.gold),
            format!("{}: gold not a candidate", ex.id),
        )?;
    }
    Ok(train.len())
}

fn candidate_soundness() -> Outcome {
    let started = Instant::now();
    let mut checked = 0;
    for seed in [7, 11, 23] {
        let ds = generate_synthetic(&SynthConfig::default(), seed).map_err(|e| e.to_string())?;
        checked += brute_force_soundness(&ds.train, &ds.registry)?;
    }
    let synth_secs = started.elapsed().as_secs_f64();
    check(synth_secs < 1.0, format!("synthetic took {synth_secs:.2}s"))?;
    let mut note = format!("{checked} synthetic train examples in {synth_secs:.2}s");
    if let Some(dir) = std::env::var_os("RELRANK_TACRED_DIR") {
        let started = Instant::now();
        let ds = Dataset::load_dir(std::path::Path::new(&dir), RelationRegistry::shipped())
            .map_err(|e| e.to_string())?;
        let n = brute_force_soundness(&ds.train, &ds.registry)?;
        let secs = started.elapsed().as_secs_f64();
        check(secs < 30.0, format!("TACRED took {secs:.1}s"))?;
        note.push_str(&format!("; {n} TACRED train examples in {secs:.1}s"));
    } else {
        note.push_str("; no TACRED directory supplied");
    }
    Ok(note)
}

fn labels(n: usize) -> Vec<RelationLabel> {
    let mut v: Vec<RelationLabel> = (1..n)
        .map(|i| RelationLabel::relation(format!("r:{i}")))
        .collect();
    v.push(RelationLabel::Na);
    v
}

fn ranking_invariants() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 512,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (
        prop::collection::vec(-40.0f64..40.0, 1..=43),
        -100.0f64..100.0,
        any::<usize>(),
    );
    runner
        .run(&strategy, |(z, c, pos_seed)| {
            let n = z.len();
            let p = softmax(&z);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            let a = scores_from_logits(labels(n), z.clone());
            let b = scores_from_logits(labels(n), z.iter().map(|v| v + c).collect());
            for (x, y) in a.probs.iter().zip(&b.probs) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
            prop_assert_eq!(predict_index(&a), predict_index(&b));
            let pos = pos_seed % n;
            let (la, lb) = (
                contrastive_loss(&a, &a.relations[pos]).unwrap(),
                contrastive_loss(&b, &b.relations[pos]).unwrap(),
            );
            prop_assert!((la - lb).abs() <= 1e-9 * la.max(1.0));
            let u = scores_from_logits(labels(n), vec![c; n]);
            prop_assert!(
                (contrastive_loss(&u, &u.relations[pos]).unwrap() - (n as f64).ln()).abs() <= 1e-12
            );
            let embs: Vec<Vec<f64>> = z
                .iter()
                .map(|&v| vec![v / 10.0, 1.0 - v / 20.0, 0.5])
                .collect();
            let head = ScoringHead {
                w: vec![0.7, -1.1, c / 100.0],
                b: 0.3,
            };
            let g = loss_grads(&head, &a.relations, &embs, &a.relations[pos]).unwrap();
            let others: f64 = g
                .logits
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != pos)
                .map(|(_, v)| v)
                .sum();
            prop_assert_eq!(others + g.logits[pos], 0.0);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("512 random candidate sets of size 1-43".into())
}

/// Loss of a 3-hypothesis example as a function of encoder and head.
fn pipeline_loss(
    p: &EncoderParams<f64>,
    head: &ScoringHead<f64>,
    inputs: &[Vec<usize>],
    rel: &[RelationLabel],
) -> f64 {
    let embs: Vec<Vec<f64>> = inputs
        .iter()
        .map(|ids| p.encode(ids).unwrap().values)
        .collect();
    let scores = relrank::ranker::score_candidates(head, rel, &embs).unwrap();
    contrastive_loss(&scores, &rel[1]).unwrap()
}

fn gradient_correctness() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for (config, seed) in [
        (
            EncoderConfig {
                dim: 16,
                layers: 1,
                heads: 4,
                max_len: 16,
                ff_dim: 24,
                seed: 1,
            },
            3u64,
        ),
        (
            EncoderConfig {
                dim: 8,
                layers: 2,
                heads: 2,
                max_len: 16,
                ff_dim: 12,
                seed: 2,
            },
            4,
        ),
    ] {
        let vocab = 20;
        let params = support::random_params(config, vocab, seed);
        let mut r = support::rng(seed);
        let head = ScoringHead {
            w: (0..config.dim).map(|_| r.random_range(-1.0..1.0)).collect(),
            b: r.random_range(-1.0..1.0),
        };
        let rel = labels(3);
        let inputs: Vec<Vec<usize>> = (0..3)
            .map(|k| vec![BOS_ID, 9, 10 + k, 11, SEP_ID, 12 + k, 13, EOS_ID, PAD_ID])
            .collect();

        let mut embs = Vec::new();
        let mut tapes = Vec::new();
        for ids in &inputs {
            let (e, t) = params.forward(ids).unwrap();
            embs.push(e.values);
            tapes.push(t);
        }
        let g = loss_grads(&head, &rel, &embs, &rel[1]).unwrap();
        let mut grads = params.zeros_like();
        for (t, up) in tapes.iter().zip(&g.embeddings) {
            params.backward(t, up, &mut grads).unwrap();
        }

        let step = 1e-4;
        let names: Vec<String> = grads.tensors().iter().map(|(n, _, _)| n.clone()).collect();
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|(_, _, t)| t.to_vec()).collect();
        for (ti, name) in names.iter().enumerate() {
            let pool: Vec<usize> = match name.as_str() {
                "embed.token" => (9..16)
                    .flat_map(|id| id * config.dim..(id + 1) * config.dim)
                    .collect(),
                "embed.position" => (0..8 * config.dim).collect(),
                _ => (0..analytic[ti].len()).collect(),
            };
            for _ in 0..20 {
                let k = pool[r.random_range(0..pool.len())];
                let (mut plus, mut minus) = (params.clone(), params.clone());
                plus.tensors_mut()[ti][k] += step;
                minus.tensors_mut()[ti][k] -= step;
                let numeric = (pipeline_loss(&plus, &head, &inputs, &rel)
                    - pipeline_loss(&minus, &head, &inputs, &rel))
                    / (2.0 * step);
                let err = support::rel_err(analytic[ti][k], numeric, 1e-6);
                check(err < 1e-4, format!("{name}[{k}]: rel err {err:e}"))?;
                worst = worst.max(err);
            }
        }
        for j in 0..=config.dim {
            let (mut hp, mut hm) = (head.clone(), head.clone());
            let analytic = if j < config.dim {
                hp.w[j] += step;
                hm.w[j] -= step;
                g.w[j]
            } else {
                hp.b += step;
                hm.b -= step;
                g.b
            };
            let numeric = (pipeline_loss(&params, &hp, &inputs, &rel)
                - pipeline_loss(&params, &hm, &inputs, &rel))
                / (2.0 * step);
            let err = support::rel_err(analytic, numeric, 1e-6);
            check(err < 1e-4, format!("head[{j}]: rel err {err:e}"))?;
            worst = worst.max(err);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(secs < 60.0, format!("took {secs:.1}s"))?;
    Ok(format!("max relative error {worst:.2e} in {secs:.1}s"))
}

struct OracleRun {
    dataset: Dataset,
    first: RunSummary,
    second: RunSummary,
    secs: [f64; 2],
}

fn oracle_run() -> &'static OracleRun {
    static RUN: OnceLock<OracleRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dataset = generate_synthetic(&SynthConfig::default(), 7).unwrap();
        let exp = Experiment::default().with_seed(7);
        let mut runs = Vec::new();
        let mut secs = [0.0; 2];
        for s in &mut secs {
            let t = Instant::now();
            runs.push(exp.run::<f64>(&dataset).unwrap().summary);
            *s = t.elapsed().as_secs_f64();
        }
        let second = runs.pop().unwrap();
        let first = runs.pop().unwrap();
        OracleRun {
            dataset,
            first,
            second,
            secs,
        }
    })
}

fn masked(run: &RunSummary) -> RunSummary {
    let mut r = run.clone();
    r.train.timing = Timing::default();
    r
}

fn synthetic_oracle() -> Outcome {
    let run = oracle_run();
    let f1 = run.first.eval.score.micro_f1;
    let losses = &run.first.train.epoch_losses;
    check(
        run.first.eval.split == "test" && run.first.eval.examples == 200,
        "evaluated on the 200-example test split",
    )?;
    check(
        losses.len() == 10,
        format!("{} epochs recorded", losses.len()),
    )?;
    check(f1 >= 0.95, format!("test micro-F1 {f1:.4} < 0.95"))?;
    check(
        losses[9] < losses[0],
        format!("loss {:.4} -> {:.4}", losses[0], losses[9]),
    )?;
    check(masked(&run.first) == masked(&run.second), "rerun differs")?;
    let json = |r: &RunSummary| serde_json::to_string(&masked(r)).unwrap();
    check(json(&run.first) == json(&run.second), "rerun JSON differs")?;
    let slowest = run.secs[0].max(run.secs[1]);
    check(slowest < 300.0, format!("run took {slowest:.0}s"))?;
    Ok(format!(
        "micro-F1 {f1:.4}, loss {:.4} -> {:.4}, rerun identical, {:.0}s per run",
        losses[0], losses[9], slowest
    ))
}

fn evaluation_correctness() -> Outcome {
    let r = |s: &str| RelationLabel::relation(s);
    let na = RelationLabel::Na;
    // gold: six relations, four NA. pred: 4 hits, 1 relation on an NA row, 5 NA.
    let gold = vec![
        r("a"),
        r("a"),
        r("b"),
        r("c"),
        r("b"),
        r("c"),
        na.clone(),
        na.clone(),
        na.clone(),
        na.clone(),
    ];
    let pred = vec![
        r("a"),
        r("a"),
        r("b"),
        r("c"),
        na.clone(),
        na.clone(),
        r("b"),
        na.clone(),
        na.clone(),
        na.clone(),
    ];
    // Hand tally: tp 4, fp 1, fn 2.
    let s = micro_prf(&gold, &pred).map_err(|e| e.to_string())?;
    check(
        (s.precision - 0.8).abs() < 1e-12,
        format!("P {}", s.precision),
    )?;
    check((s.recall - 0.6667).abs() < 1e-4, format!("R {}", s.recall))?;
    check(
        (s.micro_f1 - 0.7273).abs() < 1e-4,
        format!("F1 {}", s.micro_f1),
    )?;

    let run = oracle_run();
    let test = &run.dataset.test;
    let gold: Vec<RelationLabel> = test.iter().map(|e| e.gold.clone()).collect();
    let pred = &run.first.eval.predictions;
    let counts = relation_counts(&run.dataset.train);

    // Independent recount: per-relation F1 straight from the label lists,
    // ranking straight from the train split.
    let mut freq: Vec<(String, usize)> = Vec::new();
    for ex in &run.dataset.train {
        if ex.gold.is_na() {
            continue;
        }
        match freq.iter_mut().find(|(id, _)| id == ex.gold.id()) {
            Some(e) => e.1 += 1,
            None => freq.push((ex.gold.id().to_string(), 1)),
        }
    }
    freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let f1_of = |id: &str| -> Option<f64> {
        let tp = gold
            .iter()
            .zip(pred)
            .filter(|(g, p)| g.id() == id && p.id() == id)
            .count() as f64;
        let g = gold.iter().filter(|g| g.id() == id).count() as f64;
        let p = pred.iter().filter(|p| p.id() == id).count() as f64;
        if g == 0.0 {
            return None;
        }
        let (pr, rc) = (if p > 0.0 { tp / p } else { 0.0 }, tp / g);
        Some(if pr + rc > 0.0 {
            2.0 * pr * rc / (pr + rc)
        } else {
            0.0
        })
    };
    let mut buckets = 0;
    for (mode, ratios) in [
        (BucketMode::Top, &TOP_RATIOS[..]),
        (BucketMode::Tail, &TAIL_RATIOS[..]),
    ] {
        for &ratio in ratios {
            let n = ((ratio * freq.len() as f64) - 1e-9).ceil() as usize;
            let members: Vec<&str> = match mode {
                BucketMode::Top => freq[..n].iter().map(|(id, _)| id.as_str()).collect(),
                BucketMode::Tail => freq[freq.len() - n..]
                    .iter()
                    .map(|(id, _)| id.as_str())
                    .collect(),
            };
            let scores: Vec<f64> = members.iter().filter_map(|id| f1_of(id)).collect();
            let want = scores.iter().sum::<f64>() / scores.len() as f64;
            let got =
                bucket_macro_f1(&counts, &gold, pred, mode, ratio).map_err(|e| e.to_string())?;
            check(
                got.members.iter().map(|m| m.id()).collect::<Vec<_>>() == members,
                format!("{mode:?} {ratio} members"),
            )?;
            check(
                (got.macro_f1 - want).abs() < 1e-12,
                format!("{mode:?} {ratio}: {} vs {want}", got.macro_f1),
            )?;
            buckets += 1;
        }
    }
    Ok(format!(
        "fixture P 0.8000 R {:.4} F1 {:.4}; {buckets} buckets match recount",
        s.recall, s.micro_f1
    ))
}

fn ablation_harness() -> Outcome {
    let dataset = generate_synthetic(&SynthConfig::default(), 7).map_err(|e| e.to_string())?;
    let mut base = Experiment::default();
    base.train.epochs = 2;
    let seeds = [7];
    let matrix = ablation_matrix::<f64>(&dataset, &base, &default_cells(), &seeds)
        .map_err(|e| e.to_string())?;
    check(matrix.cells.len() == 4, "four cells")?;
    let mut f1s = Vec::new();
    for (cell, report) in &matrix.cells {
        let mut exp = base.clone();
        exp.templates = TemplateConfig {
            marker: cell.marker,
            prompt: cell.prompt,
        };
        let again = exp
            .with_seed(seeds[0])
            .run::<f64>(&dataset)
            .map_err(|e| e.to_string())?
            .summary;
        check(
            masked(&again) == masked(&report.runs[0]),
            format!("{} not reproducible", cell.label()),
        )?;
        check(
            report.runs[0].train.templates == exp.templates,
            format!("{} config echo", cell.label()),
        )?;
        f1s.push(format!(
            "{} {:.3}",
            cell.label(),
            report.aggregate["micro_f1"].mean
        ));
    }
    Ok(format!("2-epoch cells reproduced: {}", f1s.join(", ")))
}

fn non_reproducible_statement() -> Outcome {
    // Headline TACRED / TACREV / Re-TACRED F1 (76.7 / 85.8 / 91.6), the
    // bucket bar values and the classification-vs-ranking gap need a large
    // pretrained encoder and are not asserted. Only the pipeline is exercised
    // end to end on TACRED-shaped input.
    let text = r#"[
      {"id": "t1", "token": ["Sharpton","is","president","of","the","National","Action","Network","."],
       "subj_start": 5, "subj_end": 7, "subj_type": "ORGANIZATION", "obj_start": 0, "obj_end": 0, "obj_type": "PERSON",
       "relation": "org:top_members/employees"},
      {"id": "t2", "token": ["Acme","hired","Omar","."],
       "subj_start": 2, "subj_end": 2, "subj_type": "PERSON", "obj_start": 0, "obj_end": 0, "obj_type": "ORGANIZATION",
       "relation": "per:employee_of"},
      {"id": "t3", "token": ["Omar","met","Acme","."],
       "subj_start": 0, "subj_end": 0, "subj_type": "PERSON", "obj_start": 2, "obj_end": 2, "obj_type": "ORGANIZATION",
       "relation": "no_relation"}
    ]"#;
    let registry = RelationRegistry::shipped();
    let split = parse_tacred(text, &registry).map_err(|e| e.to_string())?;
    let dataset = Dataset {
        train: split.clone(),
        dev: split.clone(),
        test: split,
        registry,
    };
    let mut exp = Experiment::default();
    exp.train.epochs = 1;
    exp.encoder = EncoderConfig {
        dim: 16,
        layers: 1,
        heads: 2,
        max_len: 64,
        ff_dim: 32,
        seed: 1,
    };
    let out = exp.run::<f64>(&dataset).map_err(|e| e.to_string())?;
    check(out.summary.eval.examples == 3, "evaluated three examples")?;
    Ok("headline F1 76.7/85.8/91.6, bucket bars and RC gap not asserted; TACRED-shaped pipeline smoke run completed".into())
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 template fidelity", template_fidelity),
        ("2 candidate soundness", candidate_soundness),
        ("3 softmax/loss invariants", ranking_invariants),
        ("4 gradient correctness", gradient_correctness),
        ("5 synthetic oracle task", synthetic_oracle),
        ("6 evaluation correctness", evaluation_correctness),
        ("7 ablation harness", ablation_harness),
        (
            "8 non-reproducible at desk scale",
            non_reproducible_statement,
        ),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
