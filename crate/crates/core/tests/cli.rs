use bomasim::cli::{run, Cli, Outcome};
use clap::Parser;

fn exec(args: &[&str]) -> (bomasim::Result<bool>, String) {
    let cli = Cli::try_parse_from(std::iter::once("bomasim").chain(args.iter().copied())).expect("arguments parse");
    let mut out = Vec::new();
    let r = run(&cli, &mut out).map(|o| matches!(o, Outcome::Ok));
    (r, String::from_utf8(out).unwrap())
}

#[test]
fn params_then_inference() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("tiny.bmnp");
    let p = p.to_str().unwrap();
    let (r, out) = exec(&["gen-params", "--dims", "tiny", "--seed", "4", "--out", p]);
    assert!(r.unwrap(), "{out}");
    assert!(out.starts_with("# gen-params seed=4"));

    let (r, out) = exec(&["infer", "--params", p, "--random", "12", "--seed", "3"]);
    assert!(r.unwrap());
    assert!(out.contains("agree: 12/12"), "{out}");

    let (r, out) = exec(&["infer", "--params", p, "--prng", "off"]);
    assert!(r.unwrap());
    assert!(out.contains("masked class=") && out.contains("cycles=12344"), "{out}");

    let img = dir.path().join("img.raw");
    std::fs::write(&img, [0u8; 16]).unwrap();
    let (r, _) = exec(&["infer", "--params", p, "--image", img.to_str().unwrap(), "--mode", "unmasked"]);
    assert!(r.unwrap());
    std::fs::write(&img, [0u8; 15]).unwrap();
    let (r, _) = exec(&["infer", "--params", p, "--image", img.to_str().unwrap()]);
    assert!(r.is_err());
}

#[test]
fn capture_then_ttest() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("u.bmnt");
    let t = t.to_str().unwrap();
    let (r, out) = exec(&["capture", "--design", "unmasked", "-n", "120", "--prng", "off", "--out", t, "--workers", "2"]);
    assert!(r.unwrap(), "{out}");

    let csv = dir.path().join("t.csv");
    let json = dir.path().join("t.json");
    let (r, out) = exec(&[
        "ttest",
        "-t",
        t,
        "--order",
        "both",
        "--csv",
        csv.to_str().unwrap(),
        "--json",
        json.to_str().unwrap(),
        "--expect",
        "fail",
    ]);
    assert!(r.unwrap(), "{out}");
    assert!(out.contains("first-order: FAIL"));
    let csv = std::fs::read_to_string(csv).unwrap();
    assert_eq!(csv.lines().next(), Some("sample_index,t_first,t_second"));
    assert_eq!(csv.lines().count(), 2028);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(v["first_verdict"], "FAIL");
    assert_eq!(v["second"]["order"], 2);

    // an unmet expectation is a failed check, not an error
    let (r, _) = exec(&["ttest", "-t", t, "--expect", "pass"]);
    assert!(!r.unwrap());

    // one-pass and two-pass second order print the same verdict
    let (_, a) = exec(&["ttest", "-t", t, "--order", "second"]);
    let (_, b) = exec(&["ttest", "-t", t, "--order", "second", "--one-pass"]);
    assert_eq!(a.lines().nth(1).map(|l| &l[..18]), b.lines().nth(1).map(|l| &l[..18]));
}

#[test]
fn capture_with_inline_test() {
    let (r, out) = exec(&["capture", "--design", "gate-array", "-n", "4000", "--noise-sigma", "0.5", "--ttest", "--expect", "pass"]);
    assert!(r.unwrap(), "{out}");
    assert!(out.contains("samples=5"));
}

#[test]
fn gate_experiments() {
    let (r, out) = exec(&["gate-exp", "-n", "6000", "--noise-sigma", "0.5", "--workers", "2"]);
    assert!(r.unwrap());
    assert!(out.contains("first-order: PASS") && out.contains("second-order: FAIL"), "{out}");

    let (_, out) = exec(&["gate-exp", "--single", "--style", "unregistered", "--offsets", "0,0,0,0,3"]);
    assert!(!out.contains(" 0 violation(s)"), "{out}");
    let (_, out) = exec(&["gate-exp", "--single", "--offsets", "2,0,4,1,3"]);
    assert!(out.contains(" 0 violation(s)"), "{out}");
}

#[test]
fn bench_matches_closed_form() {
    let (r, out) = exec(&["bench", "--dims", "tiny"]);
    assert!(r.unwrap(), "{out}");
    assert!(out.contains("masked_analytic=12344 unmasked=2027"));
    assert!(out.contains("analytic == simulated"));
}

#[test]
fn bad_arguments_are_reported_together() {
    let (r, _) = exec(&["capture", "--design", "masked", "-n", "0", "--jitter", "40", "--noise-sigma=-2"]);
    let msg = r.unwrap_err().to_string();
    for needle in ["jitter", "noise_sigma", "--traces", "--out"] {
        assert!(msg.contains(needle), "{msg}");
    }
    let (r, _) = exec(&["gate-exp", "--single", "--offsets", "1,2"]);
    assert!(r.unwrap_err().to_string().contains("5 values"));
    let (r, _) = exec(&["bench", "--dims", "16,100,4"]);
    assert!(r.is_err());
    assert!(Cli::try_parse_from(["bomasim", "capture", "--design", "nope", "-n", "3"]).is_err());
}
