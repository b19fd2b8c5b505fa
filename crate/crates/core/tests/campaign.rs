use std::fs;
use std::path::Path;

use feasimap::acquisition::AcquisitionKind;
use feasimap::evaluation::ConfusionMatrix;
use feasimap::feasibility::MultiSurrogate;
use feasimap::harness::campaign::{read_summary, summarize, RunKey, RunRecord, MANIFEST};
use feasimap::harness::grid::grid_rows;
use feasimap::harness::report::report_from_records;
use feasimap::harness::{compare, emit_grid, run_campaign, CampaignConfig, Layout};
use feasimap::problems::ProblemId;
use feasimap::search::{Method, RunTrace};
use tempfile::tempdir;

const PBE: Method = Method::Acquisition(AcquisitionKind::Pbe);

fn small(problems: Vec<ProblemId>, methods: Vec<Method>, reps: usize, dir: &Path) -> CampaignConfig {
    let mut cfg = CampaignConfig::new(problems, methods);
    cfg.reps = reps;
    cfg.validation_samples = 2000;
    cfg.acq_eval_multiplier = 100;
    cfg.output_dir = dir.to_path_buf();
    cfg.workers = Some(2);
    cfg
}

fn files(dir: &Path, sub: &str) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir.join(sub))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn campaign_writes_artifacts_and_resumes() {
    let tmp = tempdir().unwrap();
    let full = tmp.path().join("full");
    let cfg = small(vec![ProblemId::G24], vec![PBE, Method::LhsOnly], 3, &full);
    let report = run_campaign(&cfg).unwrap();
    assert_eq!((report.executed, report.skipped), (6, 0));
    assert_eq!(files(&full, "traces").len(), 6);
    assert_eq!(report.summary.len(), 2);
    let summary = fs::read(full.join("summary.csv")).unwrap();
    assert_eq!(read_summary(&full.join("summary.csv")).unwrap(), report.summary);
    for row in &report.summary {
        assert_eq!(row.n_runs, 3);
        let m = row.median_informedness.unwrap();
        assert!((-1.0..=1.0).contains(&m));
    }

    // Rerunning the same campaign does nothing and rewrites the same summary.
    let again = run_campaign(&cfg).unwrap();
    assert_eq!((again.executed, again.skipped), (0, 6));
    assert_eq!(fs::read(full.join("summary.csv")).unwrap(), summary);

    // Interrupted run: two reps complete, then a torn manifest line, then resume.
    let part = tmp.path().join("part");
    let mut first = small(vec![ProblemId::G24], vec![PBE, Method::LhsOnly], 2, &part);
    first.workers = Some(1);
    run_campaign(&first).unwrap();
    let mut m = fs::OpenOptions::new().append(true).open(part.join(MANIFEST)).unwrap();
    std::io::Write::write_all(&mut m, b"{\"problem\":\"g24\",\"meth").unwrap();
    drop(m);
    let resumed = run_campaign(&small(vec![ProblemId::G24], vec![PBE, Method::LhsOnly], 3, &part)).unwrap();
    assert_eq!((resumed.executed, resumed.skipped), (2, 4));
    assert_eq!(fs::read(part.join("summary.csv")).unwrap(), summary);
    assert_eq!(files(&part, "traces"), files(&full, "traces"));
    assert_eq!(files(&part, "models"), files(&full, "models"));

    // Saved artifacts load back to the same values.
    let layout = Layout::new(&full);
    let key = RunKey {
        problem: ProblemId::G24,
        method: PBE,
        rep: 1,
    };
    let trace = RunTrace::load(layout.trace(&key)).unwrap();
    assert_eq!(trace.rows.len(), 22);
    let text = fs::read_to_string(layout.trace(&key)).unwrap();
    assert_eq!(RunTrace::from_csv(&text).unwrap().to_csv().unwrap(), text);
    let surr = MultiSurrogate::load(layout.model(&key)).unwrap();
    let saved = tmp.path().join("copy.json");
    surr.save(&saved).unwrap();
    assert_eq!(fs::read(&saved).unwrap(), fs::read(layout.model(&key)).unwrap());
    let record = RunRecord::load(layout.run(&key)).unwrap();
    assert_eq!(record.key, key);
    assert_eq!(record.evaluations, 22);
    assert_eq!(record.confusion.unwrap().total(), 2000);

    // The comparison table has one column per method and marks a best one.
    let table = compare(&full).unwrap();
    assert_eq!(table.methods, vec![Method::LhsOnly, PBE]);
    assert_eq!(table.problems, vec![ProblemId::G24]);
    assert_eq!(table.cells[0].iter().filter(|c| c.best).count(), 1);

    // Grid over a trained G24 model.
    let mut out = Vec::new();
    assert_eq!(emit_grid(ProblemId::G24, layout.model(&key), 100, &mut out).unwrap(), 10_000);
    let csv = String::from_utf8(out).unwrap();
    assert_eq!(csv.lines().count(), 10_001);
    assert!(csv.starts_with("x_0,x_1,mu_0,mu_1,sigma_0,sigma_1,p_feasible,predicted_label,true_label"));
    let rows = grid_rows(ProblemId::G24, &surr, 100).unwrap();
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.p_feasible)));
    assert!(grid_rows(ProblemId::G9, &surr, 10).is_err());
    assert!(grid_rows(ProblemId::Demo1d, &surr, 10).is_err());
}

#[test]
fn demo_grid_has_one_row_per_point() {
    let tmp = tempdir().unwrap();
    let cfg = small(vec![ProblemId::Demo1d], vec![PBE], 1, tmp.path());
    run_campaign(&cfg).unwrap();
    let key = RunKey {
        problem: ProblemId::Demo1d,
        method: PBE,
        rep: 0,
    };
    let surr = MultiSurrogate::load(Layout::new(tmp.path()).model(&key)).unwrap();
    let rows = grid_rows(ProblemId::Demo1d, &surr, 200).unwrap();
    assert_eq!(rows.len(), 200);
    assert_eq!(rows[199].x[0], std::f64::consts::TAU);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.p_feasible)));
}

fn synthetic(problems: &[ProblemId], methods: &[Method], reps: usize) -> Vec<RunRecord> {
    let mut out = Vec::new();
    for (pi, &problem) in problems.iter().enumerate() {
        for (mi, &method) in methods.iter().enumerate() {
            for rep in 0..reps {
                let tp = 50 + 5 * mi as u64 + (rep as u64 * 7 + pi as u64) % 5;
                let cm = ConfusionMatrix {
                    tp,
                    fp: 10,
                    tn: 90,
                    fn_: 100 - tp,
                };
                out.push(RunRecord {
                    key: RunKey { problem, method, rep },
                    aborted: None,
                    evaluations: 10,
                    informedness: Some(feasimap::evaluation::informedness(&cm)),
                    confusion: Some(cm),
                    elapsed_seconds: 0.0,
                });
            }
        }
    }
    out
}

#[test]
fn full_grid_summary_and_table() {
    let problems = [ProblemId::G4, ProblemId::G8, ProblemId::G9, ProblemId::G19, ProblemId::G24];
    let records = synthetic(&problems, &Method::ALL, 21);
    let rows = summarize(&records, &problems, &Method::ALL, 21).unwrap();
    assert_eq!(rows.len(), 35);
    for chunk in rows.chunks(7) {
        let best: Vec<_> = chunk.iter().filter(|r| r.p_vs_best.is_none()).collect();
        assert_eq!(best.len(), 1);
        assert!(!best[0].equivalent_to_best);
        assert!(chunk.iter().all(|r| r.n_runs == 21 && r.n_aborted == 0));
    }

    let table = report_from_records(&records).unwrap();
    assert_eq!((table.problems.len(), table.methods.len()), (5, 7));
    for row in &table.cells {
        assert_eq!(row.iter().filter(|c| c.best).count(), 1);
        assert!(row.iter().all(|c| !(c.best && c.equivalent)));
    }
    let text = table.render();
    assert_eq!(text.lines().count(), 11);
    assert_eq!(table.to_csv().lines().count(), 36);

    let single = synthetic(&[ProblemId::G8], &[PBE], 5);
    let t = report_from_records(&single).unwrap();
    assert_eq!(t.cells.len(), 1);
    assert!(t.cells[0][0].best);

    // One problem lacking a method is an error, not a silent blank.
    let mut partial = synthetic(&[ProblemId::G8, ProblemId::G24], &[PBE, Method::LhsOnly], 3);
    partial.retain(|r| !(r.key.problem == ProblemId::G24 && r.key.method == Method::LhsOnly));
    assert!(report_from_records(&partial).is_err());
}

#[test]
fn aborted_runs_are_counted_not_scored() {
    let mut records = synthetic(&[ProblemId::G8], &[PBE, Method::LhsOnly], 4);
    records[0].aborted = Some("fit failed".into());
    records[0].informedness = None;
    records[0].confusion = None;
    let rows = summarize(&records, &[ProblemId::G8], &[PBE, Method::LhsOnly], 4).unwrap();
    let pbe = rows.iter().find(|r| r.method == PBE).unwrap();
    assert_eq!((pbe.n_runs, pbe.n_aborted), (3, 1));
}
