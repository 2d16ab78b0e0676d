use std::ffi::{CStr, CString};
use std::ptr;

use owp::io::serialize_problem;
use owp::{ConstraintStructure, MopProblem, Polynomial};
use owp_ffi::*;

/// Two squared distances to `e1`, `e2` on the unit disk, preference `x1`.
fn segment_json() -> CString {
    let x = Polynomial::var(2, 0);
    let y = Polynomial::var(2, 1);
    let one = Polynomial::one(2);
    let f1 = &(&(&x - &one) * &(&x - &one)) + &(&y * &y);
    let f2 = &(&x * &x) + &(&(&y - &one) * &(&y - &one));
    let p = MopProblem::new(x.clone(), vec![f1, f2], ConstraintStructure::Ball).unwrap();
    CString::new(serialize_problem(&p)).unwrap()
}

fn last_error() -> Option<String> {
    let p = owp_last_error_message();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

#[test]
fn solve_round_trip() {
    let json = segment_json();
    unsafe {
        let mut prob = ptr::null_mut();
        assert_eq!(owp_problem_from_json(json.as_ptr(), &mut prob), OwpStatusCode::Ok);
        assert_eq!(owp_problem_nvars(prob), 2);
        assert_eq!(owp_problem_num_objectives(prob), 2);

        let mut opts = owp_solve_options_default();
        opts.rep = OwpRep::Xlambda;
        let mut res = ptr::null_mut();
        assert_eq!(owp_solve(prob, &opts, &mut res), OwpStatusCode::Ok, "{:?}", last_error());
        let mut outcome = OwpOutcome::OrderLimitReached;
        assert_eq!(owp_result_outcome(res, &mut outcome), OwpStatusCode::Ok);
        assert_eq!(outcome, OwpOutcome::Solved);
        assert!(owp_result_fmin(res).abs() < 1e-4);
        assert!(owp_result_order(res) >= 1);
        assert!(owp_result_num_minimizers(res) >= 1);

        let mut len = 0usize;
        assert_eq!(
            owp_result_minimizer(res, 0, OwpField::X, ptr::null_mut(), &mut len),
            OwpStatusCode::Ok
        );
        assert_eq!(len, 2);
        let mut x = [0.0; 2];
        assert_eq!(
            owp_result_minimizer(res, 0, OwpField::X, x.as_mut_ptr(), &mut len),
            OwpStatusCode::Ok
        );
        assert!(x[0].abs() < 1e-3 && (x[1] - 1.0).abs() < 1e-3, "{x:?}");

        let mut small = [0.0; 1];
        let mut cap = 1usize;
        assert_eq!(
            owp_result_minimizer(res, 0, OwpField::W, small.as_mut_ptr(), &mut cap),
            OwpStatusCode::OutOfRange
        );
        assert_eq!(cap, 2);
        assert!(last_error().unwrap().contains("buffer"));
        assert_eq!(
            owp_result_minimizer(res, 99, OwpField::X, ptr::null_mut(), &mut len),
            OwpStatusCode::OutOfRange
        );

        let report = owp_result_to_json(res);
        let text = CStr::from_ptr(report).to_str().unwrap().to_owned();
        owp_string_free(report);
        assert!(text.contains("\"status\": \"Solved\""));

        let mut ub = 0.0;
        assert_eq!(owp_oracle_upper_bound(prob, 10, &mut ub), OwpStatusCode::Ok);
        assert!(ub >= owp_result_fmin(res) - 1e-4);

        owp_result_free(res);
        owp_problem_free(prob);
    }
}

#[test]
fn problem_json_round_trip() {
    let json = segment_json();
    unsafe {
        let mut prob = ptr::null_mut();
        assert_eq!(owp_problem_from_json(json.as_ptr(), &mut prob), OwpStatusCode::Ok);
        let back = owp_problem_to_json(prob);
        assert_eq!(CStr::from_ptr(back).to_bytes(), json.as_bytes());
        owp_string_free(back);
        owp_problem_free(prob);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut prob = ptr::null_mut();
        let bad = CString::new("{\"version\": \"owp-problem/1\"").unwrap();
        assert_eq!(owp_problem_from_json(bad.as_ptr(), &mut prob), OwpStatusCode::Parse);
        assert!(prob.is_null());
        assert!(last_error().is_some());

        assert_eq!(owp_problem_from_json(ptr::null(), &mut prob), OwpStatusCode::NullPointer);
        let mut res = ptr::null_mut();
        assert_eq!(owp_solve(ptr::null(), ptr::null(), &mut res), OwpStatusCode::NullPointer);
        assert!(res.is_null());

        let invalid = [0xffu8, 0xfe, 0];
        assert_eq!(
            owp_problem_from_json(invalid.as_ptr().cast(), &mut prob),
            OwpStatusCode::InvalidUtf8
        );

        let good = segment_json();
        assert_eq!(owp_problem_from_json(good.as_ptr(), &mut prob), OwpStatusCode::Ok);
        assert!(last_error().is_none());
        owp_problem_free(prob);

        assert!(owp_result_fmin(ptr::null()).is_nan());
        assert_eq!(owp_problem_nvars(ptr::null()), 0);
        owp_problem_free(ptr::null_mut());
        owp_result_free(ptr::null_mut());
        owp_string_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_thread_local() {
    unsafe {
        let mut prob = ptr::null_mut();
        assert_eq!(owp_problem_from_json(ptr::null(), &mut prob), OwpStatusCode::NullPointer);
    }
    let other = std::thread::spawn(last_error).join().unwrap();
    assert!(other.is_none());
    assert!(last_error().is_some());
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(owp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/owp.h");
    let src = include_str!("../src/lib.rs");
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in ["OwpProblem", "OwpResultHandle", "OwpSolveOptions", "OWP_STATUS_CODE_OK"] {
        assert!(header.contains(ty), "{ty}");
    }
}

#[test]
fn c_program_links_and_solves() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib = deps.join("libowp_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built, skipping", lib.display());
        return;
    }
    let dir = env!("CARGO_MANIFEST_DIR");
    let exe = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("owp_smoke");
    let status = std::process::Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(format!("{dir}/include"))
        .arg(format!("{dir}/tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");
    let out = std::process::Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn which_cc() -> Result<String, ()> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    std::process::Command::new(&cc)
        .arg("--version")
        .output()
        .map(|_| cc)
        .map_err(|_| ())
}
