use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use evcs_ffi::*;

fn last_error() -> String {
    let p = evcs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn default_config() -> *mut EvcsConfig {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { evcs_config_default(&mut cfg) }, EvcsStatus::Ok);
    cfg
}

#[test]
fn gini_and_error_reporting() {
    let mut g = -1.0;
    let x = [0.0, 1.0];
    assert_eq!(unsafe { evcs_gini(x.as_ptr(), 2, &mut g) }, EvcsStatus::Ok);
    assert_eq!(g, 0.5);
    assert!(evcs_last_error().is_null());

    assert_eq!(unsafe { evcs_gini(ptr::null(), 2, &mut g) }, EvcsStatus::NullPointer);
    assert!(last_error().contains("values"));

    let bad = [1.0, -2.0];
    assert_eq!(
        unsafe { evcs_gini(bad.as_ptr(), 2, &mut g) },
        EvcsStatus::InvalidArgument
    );
    assert_eq!(unsafe { evcs_gini(ptr::null(), 0, &mut g) }, EvcsStatus::Ok);
    assert_eq!(g, 0.0);
}

#[test]
fn config_round_trips_through_json() {
    let json = CString::new(r#"{"options": {"quantum_kw": 1.0}}"#).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(
        unsafe { evcs_config_from_json(json.as_ptr(), &mut cfg) },
        EvcsStatus::Ok
    );
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { evcs_config_to_json(cfg, &mut text) }, EvcsStatus::Ok);
    let s = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_owned();
    assert!(s.contains("\"quantum_kw\": 1.0"), "{s}");
    unsafe {
        evcs_string_free(text);
        evcs_config_free(cfg);
    }

    let broken = CString::new("{not json").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(
        unsafe { evcs_config_from_json(broken.as_ptr(), &mut cfg) },
        EvcsStatus::Parse
    );
    assert!(cfg.is_null());
    let negative = CString::new(r#"{"options": {"quantum_kw": -1.0}}"#).unwrap();
    assert_eq!(
        unsafe { evcs_config_from_json(negative.as_ptr(), &mut cfg) },
        EvcsStatus::InvalidArgument
    );
}

#[test]
fn dispatch_matches_the_nominal_hand_trace() {
    let cfg = default_config();
    let mut d = EvcsDispatch::default();
    assert_eq!(unsafe { evcs_dispatch(cfg, 200.0, 0.0, 100.0, &mut d) }, EvcsStatus::Ok);
    assert!((d.p_grid - 102.0 / 0.99).abs() < 1e-9);
    assert!(d.p_bess.abs() < 1e-9 && !d.crate_clipped);
    assert_eq!(
        unsafe { evcs_dispatch(cfg, -1.0, 0.0, 0.0, &mut d) },
        EvcsStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { evcs_dispatch(ptr::null(), 1.0, 0.0, 0.0, &mut d) },
        EvcsStatus::NullPointer
    );
    unsafe { evcs_config_free(cfg) };
}

#[test]
fn controller_steps_every_method() {
    let cfg = default_config();
    let evs = [
        EvcsVehicle {
            id: 1,
            column: 0,
            p_req: 40.0,
            p_max: 40.0,
            p_ref: 150.0,
        },
        EvcsVehicle {
            id: 2,
            column: 1,
            p_req: 30.0,
            p_max: 30.0,
            p_ref: 150.0,
        },
    ];
    let slice = EvcsSlice {
        c_budget: 50.0,
        d_cap: 0.1,
        s_min: -50.0,
        s_max: 300.0,
        tariff_ev: 0.45,
        price_dam: 0.12,
        price_short: 0.2,
        price_long: 0.05,
        ..EvcsSlice::default()
    };
    for code in [
        EVCS_METHOD_SG_ADMM,
        EVCS_METHOD_ADMM,
        EVCS_METHOD_CENTRALIZED,
        EVCS_METHOD_UNCONTROLLED,
    ] {
        let mut ctrl = ptr::null_mut();
        assert_eq!(unsafe { evcs_controller_new(cfg, code, &mut ctrl) }, EvcsStatus::Ok);
        let (mut power, mut theta) = ([0.0; 2], [0.0; 2]);
        let mut info = EvcsStepInfo::default();
        for _ in 0..3 {
            let s = unsafe {
                evcs_controller_step(
                    ctrl,
                    evs.as_ptr(),
                    2,
                    &slice,
                    power.as_mut_ptr(),
                    theta.as_mut_ptr(),
                    &mut info,
                )
            };
            assert_eq!(s, EvcsStatus::Ok, "method {code}");
        }
        for (p, v) in power.iter().zip(&evs) {
            assert!(*p >= 0.0 && *p <= v.p_max + 1e-9, "method {code}: {power:?}");
        }
        assert!(theta.iter().all(|t| (0.0..=0.1).contains(t)));
        if code != EVCS_METHOD_UNCONTROLLED {
            let total: f64 = power.iter().sum();
            assert!(total < 70.0, "method {code} ignored the budget: {total}");
        }
        let empty = unsafe {
            evcs_controller_step(
                ctrl,
                ptr::null(),
                0,
                &slice,
                ptr::null_mut(),
                ptr::null_mut(),
                ptr::null_mut(),
            )
        };
        assert_eq!(empty, EvcsStatus::Ok);
        unsafe { evcs_controller_free(ctrl) };
    }
    unsafe { evcs_config_free(cfg) };
}

#[test]
fn controller_rejects_bad_input() {
    let cfg = default_config();
    let mut ctrl = ptr::null_mut();
    assert_eq!(
        unsafe { evcs_controller_new(cfg, 9, &mut ctrl) },
        EvcsStatus::InvalidArgument
    );
    assert!(last_error().contains("method"));
    assert_eq!(
        unsafe { evcs_controller_new(cfg, EVCS_METHOD_ADMM, &mut ctrl) },
        EvcsStatus::Ok
    );
    let slice = EvcsSlice {
        c_budget: 10.0,
        s_min: -10.0,
        s_max: 10.0,
        ..EvcsSlice::default()
    };
    let (mut p, mut t) = ([0.0; 2], [0.0; 2]);
    let dup = [
        EvcsVehicle {
            id: 1,
            column: 0,
            p_req: 5.0,
            p_max: 5.0,
            p_ref: 50.0,
        },
        EvcsVehicle {
            id: 1,
            column: 0,
            p_req: 5.0,
            p_max: 5.0,
            p_ref: 50.0,
        },
    ];
    let s = unsafe {
        evcs_controller_step(
            ctrl,
            dup.as_ptr(),
            2,
            &slice,
            p.as_mut_ptr(),
            t.as_mut_ptr(),
            ptr::null_mut(),
        )
    };
    assert_eq!(s, EvcsStatus::InvalidArgument);
    let far = [EvcsVehicle {
        id: 1,
        column: 99,
        p_req: 5.0,
        p_max: 5.0,
        p_ref: 50.0,
    }];
    let s = unsafe {
        evcs_controller_step(
            ctrl,
            far.as_ptr(),
            1,
            &slice,
            p.as_mut_ptr(),
            t.as_mut_ptr(),
            ptr::null_mut(),
        )
    };
    assert_eq!(s, EvcsStatus::InvalidArgument);
    let over = [EvcsVehicle {
        id: 1,
        column: 0,
        p_req: 9.0,
        p_max: 5.0,
        p_ref: 50.0,
    }];
    let s = unsafe {
        evcs_controller_step(
            ctrl,
            over.as_ptr(),
            1,
            &slice,
            p.as_mut_ptr(),
            t.as_mut_ptr(),
            ptr::null_mut(),
        )
    };
    assert_eq!(s, EvcsStatus::InvalidArgument);
    let s = unsafe {
        evcs_controller_step(
            ctrl,
            far.as_ptr(),
            1,
            &slice,
            ptr::null_mut(),
            t.as_mut_ptr(),
            ptr::null_mut(),
        )
    };
    assert_eq!(s, EvcsStatus::NullPointer);
    unsafe {
        evcs_controller_free(ctrl);
        evcs_config_free(cfg);
    }
}

#[test]
fn simulate_reports_metrics_and_writes_files() {
    let cfg = default_config();
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { evcs_scenario_synthetic(5, 12, cfg, &mut sc) }, EvcsStatus::Ok);
    assert_eq!(unsafe { evcs_scenario_steps(sc) }, 1440);
    assert_eq!(unsafe { evcs_scenario_sessions(sc) }, 12);
    let mut tr = ptr::null_mut();
    assert_eq!(
        unsafe { evcs_simulate(sc, cfg, EVCS_METHOD_SG_ADMM, &mut tr) },
        EvcsStatus::Ok
    );
    assert_eq!(unsafe { evcs_trace_steps(tr) }, 1440);
    let mut m = EvcsMetrics::default();
    assert_eq!(unsafe { evcs_trace_metrics(tr, &mut m) }, EvcsStatus::Ok);
    assert_eq!((m.minutes, m.sessions), (1440, 12));
    assert!(m.energy_delivered_kwh > 0.0 && m.energy_delivered_kwh <= m.energy_requested_kwh + 1e-9);
    assert!((0.0..=1.0).contains(&m.fairness_gini));

    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().join("run").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { evcs_trace_write(tr, out.as_ptr()) }, EvcsStatus::Ok);
    for f in ["trace_sg-admm.csv", "evs_sg-admm.csv", "metrics_sg-admm.json"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
    unsafe {
        evcs_trace_free(tr);
        evcs_scenario_free(sc);
        evcs_config_free(cfg);
    }
}

#[test]
fn missing_scenario_is_an_io_error() {
    let cfg = default_config();
    let path = CString::new("/nonexistent/evcs/scenario.json").unwrap();
    let mut sc = ptr::null_mut();
    let s = unsafe { evcs_scenario_load(path.as_ptr(), cfg, &mut sc) };
    assert!(matches!(s, EvcsStatus::Io | EvcsStatus::Parse), "{s:?}");
    assert!(sc.is_null());
    assert_eq!(unsafe { evcs_scenario_steps(ptr::null()) }, 0);
    unsafe {
        evcs_scenario_free(ptr::null_mut());
        evcs_config_free(cfg);
    }
}

#[test]
fn header_declares_the_exported_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/evcs.h")).unwrap();
    for name in [
        "evcs_version",
        "evcs_last_error",
        "evcs_gini",
        "evcs_dispatch",
        "evcs_controller_step",
        "evcs_simulate",
        "evcs_trace_metrics",
        "evcs_trace_write",
        "EVCS_STATUS_INVALID_ARGUMENT",
        "typedef struct EvcsTrace EvcsTrace",
    ] {
        assert!(header.contains(name), "{name} missing from evcs.h");
    }
    let v = unsafe { CStr::from_ptr(evcs_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn static_lib() -> Option<PathBuf> {
    let deps = std::env::current_exe().ok()?.parent()?.to_path_buf();
    let lib = deps.parent()?.join("libevcs_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_against_the_static_library() {
    let Some(lib) = static_lib() else {
        eprintln!("libevcs_ffi.a not found next to the test binary; skipping");
        return;
    };
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler on PATH; skipping");
        return;
    }
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let build = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg(format!("-I{}", manifest.join("include").display()))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&exe).arg(dir.path().join("out")).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("p_grid 103.030303"), "{stdout}");
    assert!(stdout.contains("minutes 1440 sessions 10"), "{stdout}");
    assert!(dir.path().join("out/trace_admm.csv").exists());
}
