mod common;

use std::fs;
use std::path::Path;

use common::{hash_tree, path_str, run, validate, validate_tree};
use motifwatch::analysis::{
    analyze_motifs, bars_from, event_inputs, impact_inputs, replay_events, MotifFileReport,
};
use motifwatch::events::{event_study, EventStudyConfig, SideFilter};
use motifwatch::impact::{impact_study, ImpactReport};
use motifwatch::io::{read_json, read_records, Format};
use motifwatch::powerlaw::{fit_discrete_powerlaw, PowerLawFit};
use motifwatch::synth::{generate, random_plan, MarketConfig};
use motifwatch::tape::{Quote, Session, Trade};
use motifwatch_cli::manifest::RunManifest;
use tempfile::TempDir;

const CONFIG: &str =
    r#"{"n_stocks": 2, "n_days": 12, "n_background_traders": 300, "order_rate": 5, "seed": 9}"#;

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, CONFIG).unwrap();
    path
}

#[test]
fn pipeline_outputs_validate_and_recover_labels() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path());
    let out = tmp.path().join("run");
    let res = run(&[
        "pipeline",
        "--config",
        path_str(&config),
        "--injections",
        "30",
        "--out",
        path_str(&out),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let checked = validate_tree(&out).unwrap();
    assert!(checked >= 12, "{checked} files validated");
    let recall: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("recall.json")).unwrap()).unwrap();
    assert_eq!(recall["found"], recall["labels"]);
    assert_eq!(recall["recovered"], recall["eligible"]);
    let manifest: RunManifest = read_json(&out.join("manifest.json")).unwrap();
    for file in &manifest.outputs {
        assert!(out.join(&file.path).is_file(), "{}", file.path);
    }
    assert_eq!(manifest.seed, Some(9));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (out, jobs) in [(&a, "1"), (&b, "3")] {
        let res = run(&[
            "pipeline",
            "--config",
            path_str(&config),
            "--injections",
            "10",
            "--format",
            "jsonl",
            "--jobs",
            jobs,
            "--out",
            path_str(out),
        ]);
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
    }
    let (ha, hb) = (hash_tree(&a), hash_tree(&b));
    assert!(ha.contains_key("replay/trades.jsonl"));
    assert_eq!(ha, hb);
}

#[test]
fn stages_match_library_calls() {
    let tmp = TempDir::new().unwrap();
    let config_path = write_config(tmp.path());
    let out = tmp.path().join("s");
    let o = |sub: &str| out.join(sub);
    assert!(run(&[
        "synth",
        path_str(&config_path),
        "--injections",
        "8",
        "--out",
        path_str(&o("synth"))
    ])
    .status
    .success());
    assert!(run(&[
        "replay",
        path_str(&o("synth/tape.csv")),
        "--out",
        path_str(&o("replay"))
    ])
    .status
    .success());
    assert!(run(&[
        "motifs",
        path_str(&o("replay/trades.csv")),
        "--out",
        path_str(&o("motifs"))
    ])
    .status
    .success());
    let res = run(&[
        "eventstudy",
        "--trades",
        path_str(&o("replay/trades.csv")),
        "--quotes",
        path_str(&o("replay/quotes.csv")),
        "--motifs",
        path_str(&o("motifs/motifs.json")),
        "--group-size",
        "5",
        "--fit-range",
        "2:100",
        "--variables",
        "volume,turnover",
        "--out",
        path_str(&o("es")),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let res = run(&[
        "impact",
        "--trades",
        path_str(&o("replay/trades.csv")),
        "--motifs",
        path_str(&o("motifs/motifs.json")),
        "--side",
        "buyer",
        "--out",
        path_str(&o("impact")),
    ]);
    assert!(res.status.success());

    let config: MarketConfig = serde_json::from_str(CONFIG).unwrap();
    let lib = generate(&config, &random_plan(&config, 8, config.seed)).unwrap();
    let replay = replay_events(&lib.tape, Session::default());
    let trades: Vec<Trade> = read_records(&o("replay/trades.csv"), Format::Csv).unwrap();
    let quotes: Vec<Quote> = read_records(&o("replay/quotes.csv"), Format::Csv).unwrap();
    assert_eq!(trades, replay.trades);
    assert_eq!(quotes, replay.quotes);

    let motifs: MotifFileReport = read_json(&o("motifs/motifs.json")).unwrap();
    assert_eq!(motifs, analyze_motifs(&replay.trades));

    let study = EventStudyConfig {
        variables: vec![
            motifwatch::tape::Variable::Volume,
            motifwatch::tape::Variable::Turnover,
        ],
        group_size: 5,
        fit_range: "2:100".parse().unwrap(),
        side: SideFilter::Both,
    };
    let bars = bars_from(&replay.trades, &replay.quotes, Session::default());
    let expected = event_study(
        &event_inputs(&bars, &replay.trades, &motifs, Session::default()),
        &study,
    )
    .unwrap();
    let got: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(o("es/eventstudy.json")).unwrap()).unwrap();
    assert_eq!(got, serde_json::to_value(&expected).unwrap());

    let got: ImpactReport = read_json(&o("impact/impact.json")).unwrap();
    assert_eq!(
        got,
        impact_study(&impact_inputs(&replay.trades, &motifs), SideFilter::Buyer)
    );
    assert_eq!(got.sides.len(), 1);
    validate("impact", &o("impact/impact.json")).unwrap();
    validate("eventstudy", &o("es/eventstudy.json")).unwrap();
}

#[test]
fn empty_tape_gives_empty_outputs() {
    let tmp = TempDir::new().unwrap();
    let tape = tmp.path().join("tape.csv");
    fs::write(
        &tape,
        "stock,day,timestamp_ms,trader,action,side,price_ticks,size,order_ref\n",
    )
    .unwrap();
    let out = tmp.path().join("o");
    let res = run(&["replay", path_str(&tape), "--out", path_str(&out)]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let trades: Vec<Trade> = read_records(&out.join("trades.csv"), Format::Csv).unwrap();
    assert!(trades.is_empty());
    assert!(fs::read_to_string(out.join("trades.csv"))
        .unwrap()
        .starts_with("stock,"));
}

#[test]
fn fit_reads_plain_and_json_samples() {
    let tmp = TempDir::new().unwrap();
    let mut sample = Vec::new();
    for x in 1..=60u64 {
        for _ in 0..(3000 / (x * x * x)).max(1) {
            sample.push(x);
        }
    }
    let text: String = sample.iter().map(|x| format!("{x}\n")).collect();
    let plain = tmp.path().join("s.txt");
    fs::write(&plain, format!("# counts\n{text}")).unwrap();
    let json = tmp.path().join("s.json");
    fs::write(&json, serde_json::to_string(&sample).unwrap()).unwrap();
    let expected = fit_discrete_powerlaw(&sample).unwrap();
    for (input, out) in [(&plain, "a"), (&json, "b")] {
        let out = tmp.path().join(out);
        assert!(run(&["fit", path_str(input), "--out", path_str(&out)])
            .status
            .success());
        let got: PowerLawFit = read_json(&out.join("fit.json")).unwrap();
        assert_eq!(got, expected);
        validate("fit", &out.join("fit.json")).unwrap();
    }
    let out = tmp.path().join("c");
    assert!(run(&[
        "fit",
        path_str(&plain),
        "--form",
        "ccdf",
        "--bootstrap",
        "20",
        "--seed",
        "4",
        "--out",
        path_str(&out)
    ])
    .status
    .success());
    let got: PowerLawFit = read_json(&out.join("fit.json")).unwrap();
    assert!((got.exponent - (expected.exponent - 1.0)).abs() < 1e-12);
    assert_eq!(got.seed, Some(4));
    assert!(got.p_value.is_some());
}

#[test]
fn input_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let cases: Vec<Vec<String>> = {
        let bad_config = tmp.path().join("bad.json");
        fs::write(&bad_config, r#"{"n_stocks": 0}"#).unwrap();
        let unknown_field = tmp.path().join("unknown.json");
        fs::write(&unknown_field, r#"{"n_stockz": 2}"#).unwrap();
        let flat = tmp.path().join("flat.txt");
        fs::write(&flat, "5 5 5 5 5 5").unwrap();
        let garbage = tmp.path().join("garbage.csv");
        fs::write(&garbage, "not,a,tape\n1,2,3\n").unwrap();
        let s = |p: &Path| p.to_str().unwrap().to_owned();
        vec![
            vec!["synth".into(), s(&tmp.path().join("missing.json"))],
            vec!["synth".into(), s(&bad_config)],
            vec!["synth".into(), s(&unknown_field)],
            vec!["fit".into(), s(&flat)],
            vec!["replay".into(), s(&garbage)],
            vec![
                "eventstudy".into(),
                "--trades".into(),
                "x".into(),
                "--quotes".into(),
                "y".into(),
                "--motifs".into(),
                "z".into(),
                "--side".into(),
                "neither".into(),
            ],
            vec!["pipeline".into()],
        ]
    };
    for args in cases {
        let mut all: Vec<&str> = args.iter().map(String::as_str).collect();
        all.extend(["--out", path_str(&out)]);
        let res = run(&all);
        assert_eq!(
            res.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&res.stderr)
        );
    }
}
