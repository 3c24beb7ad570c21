use std::path::Path;

use ste::frontend::{load, parse_str, FrontendErrorKind};
use ste::ir::render::render_program;
use ste::ir::Rule;
use ste::kernels::{fixture, gallery};
use ste::transform::{apply_taskloop_tls, TransformError};

fn golden(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    std::fs::read_to_string(p).unwrap()
}

fn transformed(name: &str) -> String {
    let p = load(&format!("{name}.stec"), fixture(name).unwrap()).unwrap();
    apply_taskloop_tls(&p).unwrap().render()
}

#[test]
fn fixtures_match_golden_files() {
    assert_eq!(transformed("fig4"), golden("fig5.golden.stec"));
    assert_eq!(transformed("loopv"), golden("loopv.golden.stec"));
}

#[test]
fn source_rendering_is_a_fixed_point() {
    let sources = gallery()
        .iter()
        .map(|k| k.source)
        .chain(["fig4", "loopv", "ordered_corners"].map(|f| fixture(f).unwrap()));
    for src in sources {
        let p = load("k.stec", src).unwrap();
        let once = render_program(&p);
        let back = parse_str(&once).unwrap();
        assert_eq!(back, p);
        assert_eq!(render_program(&back), once);
    }
}

#[test]
fn transformed_rendering_is_stable() {
    for k in gallery() {
        let t = apply_taskloop_tls(&k.program().unwrap()).unwrap();
        assert_eq!(t.render(), render_program(&t.base));
        assert_eq!(
            t.render(),
            apply_taskloop_tls(&k.program().unwrap()).unwrap().render()
        );
    }
}

const HEAD: &str = "int s = 0; int x = 0; int A[8];\n";

fn loop_with(pragma: &str, body: &str) -> String {
    format!("{HEAD}{pragma}\nfor (i = 0; i < 8; i++) {{\n{body}\n}}\n")
}

#[test]
fn malformed_pragmas_are_parse_errors() {
    let cases = [
        (
            "#pragma omp taskloop tls(0)",
            "s = s + i;",
            FrontendErrorKind::InvalidClauseValue,
        ),
        (
            "#pragma omp taskloop tls(-3)",
            "s = s + i;",
            FrontendErrorKind::InvalidClauseValue,
        ),
        (
            "#pragma omp taskloop tls(4) spec_frobnicate(x)",
            "x = i;",
            FrontendErrorKind::UnknownClause,
        ),
        (
            "#pragma omp taskloop tls(4) spec_reduction(max:s)",
            "s = s + i;",
            FrontendErrorKind::UnknownClause,
        ),
        (
            "#pragma omp taskloop tls(4) spec_private(x)",
            "#pragma omp tls maybe(x)\nx = i;",
            FrontendErrorKind::UnknownClause,
        ),
    ];
    for (pragma, body, kind) in cases {
        let err = load("t.stec", &loop_with(pragma, body)).unwrap_err();
        assert_eq!(err.kind, kind, "{pragma}: {err}");
    }
}

#[test]
fn invalid_pragmas_name_the_broken_rule() {
    let cases = [
        (
            "#pragma omp taskloop tls(4) grainsize(2)",
            "s = s + i;",
            Rule::MutuallyExclusive,
        ),
        (
            "#pragma omp taskloop spec_private(x)",
            "x = i;",
            Rule::SpecClauseWithoutTls,
        ),
        (
            "#pragma omp taskloop tls(4)",
            "#pragma omp tls write(x)\nx = i;",
            Rule::TlsTargetNotSpecPrivate,
        ),
        (
            "#pragma omp taskloop tls(4) spec_private(A)",
            "#pragma omp tls if_read(A)\nA[i] = 1;",
            Rule::TlsReadOfArray,
        ),
        (
            "#pragma omp taskloop tls(4) spec_private(x) spec_reduction(+:x)",
            "x = x + i;",
            Rule::PrivateReductionOverlap,
        ),
        (
            "#pragma omp taskloop tls(4) spec_reduction(+:A)",
            "A[i] = 1;",
            Rule::ReductionTargetNotScalar,
        ),
        (
            "#pragma omp taskloop tls(4)",
            "i = 3;",
            Rule::InductionAssigned,
        ),
    ];
    for (pragma, body, rule) in cases {
        let err = load("t.stec", &loop_with(pragma, body)).unwrap_err();
        assert_eq!(err.kind, FrontendErrorKind::Invalid, "{pragma}");
        assert!(err.message.starts_with(rule.message()), "{pragma}: {err}");
    }
    let outside = format!("{HEAD}#pragma omp tls write(x)\nx = 1;\n");
    let err = load("t.stec", &outside).unwrap_err();
    assert!(
        err.message.starts_with(Rule::PragmaOutsideTls.message()),
        "{err}"
    );
}

#[test]
fn unsupported_shapes_are_transform_errors() {
    let unclaused = loop_with("#pragma omp taskloop tls(4) spec_private(x)", "x = i;");
    let p = load("t.stec", &unclaused).unwrap();
    assert!(matches!(
        apply_taskloop_tls(&p),
        Err(TransformError::MissingAccessClause { .. })
    ));
    let not_reduction = loop_with(
        "#pragma omp taskloop tls(4) spec_reduction(+:s)",
        "s = s * i;",
    );
    let p = load("t.stec", &not_reduction).unwrap();
    assert!(matches!(
        apply_taskloop_tls(&p),
        Err(TransformError::PatternMismatch { .. })
    ));
}
