use proptest::prelude::*;
use ste::frontend::{load, parse_str};
use ste::htm::MemoryImage;
use ste::ir::render::render_program;
use ste::ir::{events::is_balanced, Program};
use ste::runtime::{interpret, run_transformed, ExecMode, RunConfig, SchedPolicy};
use ste::transform::{apply_taskloop_tls_with, TransformOptions};

const N: i64 = 48;

/// Expressions over the induction variable, constants, the input array and
/// `rnd`. `x` is allowed once it has been written in the iteration.
fn expr(with_x: bool) -> impl Strategy<Value = String> {
    let mut leaves = vec![
        Just("i".to_string()).boxed(),
        (0i64..20).prop_map(|c| c.to_string()).boxed(),
        (0i64..N).prop_map(|c| format!("D[(i + {c}) % N]")).boxed(),
        (0i64..100)
            .prop_map(|c| format!("rnd(i + {c}) % 64"))
            .boxed(),
    ];
    if with_x {
        leaves.push(Just("x".to_string()).boxed());
    }
    prop::strategy::Union::new(leaves).prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (
                inner.clone(),
                prop::sample::select(vec!["+", "-", "*", "^"]),
                inner.clone()
            )
                .prop_map(|(a, op, b)| format!("({a} {op} {b})")),
            (inner, 1i64..9).prop_map(|(a, c)| format!("({a} % {c})")),
        ]
    })
}

fn cond() -> impl Strategy<Value = String> {
    (expr(true), 2i64..5).prop_map(|(e, m)| format!("{e} % {m} == 0"))
}

#[derive(Clone, Debug)]
struct Shape {
    strip: i64,
    red_op: &'static str,
    x: String,
    red: Option<String>,
    cond_n: Option<(String, String)>,
    use_n: bool,
    a: Option<String>,
    b: Option<(String, String)>,
    dep: Option<(i64, i64, String)>,
    nested: Option<String>,
}

fn shape() -> impl Strategy<Value = Shape> {
    (
        1i64..12,
        prop::sample::select(vec!["+", "-", "*", "|", "^", "&", "&&", "||"]),
        expr(false),
        prop::option::of(expr(true)),
        prop::option::of((cond(), expr(true))),
        any::<bool>(),
        prop::option::of(expr(true)),
        prop::option::of((cond(), expr(true))),
        prop::option::of((1i64..N, 1i64..N, expr(true))),
        prop::option::of(expr(true)),
    )
        .prop_map(
            |(strip, red_op, x, red, cond_n, use_n, a, b, dep, nested)| Shape {
                strip,
                red_op,
                x,
                red,
                cond_n,
                use_n,
                a,
                b,
                dep,
                nested,
            },
        )
}

fn source(s: &Shape) -> String {
    let mut private = vec!["x"];
    let mut body = format!("    #pragma omp tls write(x)\n    x = {};\n", s.x);
    let mut clauses = String::new();
    if let Some(e) = &s.red {
        clauses = format!(" spec_reduction({}:r)", s.red_op);
        body += &format!("    r = r {} ({e});\n", s.red_op);
    }
    if let Some((c, e)) = &s.cond_n {
        private.push("n");
        body += &format!(
            "    if ({c}) {{\n        #pragma omp tls if_write(n)\n        n = {e};\n    }}\n"
        );
        if s.use_n {
            body += "    #pragma omp tls if_read(n)\n    C[i] = n + x;\n";
        }
    }
    if let Some(e) = &s.a {
        private.push("A");
        body += &format!("    #pragma omp tls write(A)\n    A[i] = {e};\n");
    }
    if let Some((c, e)) = &s.b {
        private.push("B");
        body +=
            &format!("    if ({c})\n        #pragma omp tls if_write(B)\n        B[i] = {e};\n");
    }
    if let Some((k1, k2, e)) = &s.dep {
        body += &format!("    D[(i * {k1}) % N] = D[(i * {k2}) % N] + {e};\n");
    }
    if let Some(e) = &s.nested {
        private.push("E");
        body += &format!(
            "    for (j = 0; j < 4; j++) {{\n        #pragma omp tls write(E)\n        E[i * 4 + j] = {e} + j;\n    }}\n"
        );
    }
    format!(
        "int N = {N};\nint r = 3;\nint x = 0;\nint n = 0;\n\
         int A[{N}];\nint B[{N}];\nint C[{N}];\nint D[{N}];\nint E[{}];\n\
         for (k = 0; k < N; k++)\n    D[k] = rnd(k) % 50;\n\
         #pragma omp taskloop tls({}) spec_private({}){clauses}\n\
         for (i = 0; i < N; i++) {{\n{body}}}\n",
        4 * N,
        s.strip,
        private.join(", "),
    )
}

fn digest(p: &Program, seed: u64) -> String {
    let mut m = MemoryImage::initial(p);
    interpret(p, &mut m, seed).unwrap();
    m.digest()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn render_then_parse_is_identity(s in shape()) {
        let p = load("gen.stec", &source(&s)).unwrap();
        let text = render_program(&p);
        prop_assert_eq!(parse_str(&text).unwrap(), p);
    }

    #[test]
    fn transformed_program_is_serial_equal(s in shape(), strip in 1i64..20, seed in any::<u64>()) {
        let p = load("gen.stec", &source(&s)).unwrap();
        let t = apply_taskloop_tls_with(&p, TransformOptions { strip_override: Some(strip) }).unwrap();
        prop_assert_eq!(digest(&t.base, seed), digest(&p, seed));
        for plan in &t.loops {
            prop_assert!(is_balanced(&plan.copyback_events));
        }
    }

    #[test]
    fn speculative_run_is_serial_equal(
        s in shape(),
        threads in 1usize..6,
        sched in prop_oneof![
            Just(SchedPolicy::Monotonic),
            Just(SchedPolicy::Lifo),
            any::<u64>().prop_map(SchedPolicy::NonMonotonicRandom),
        ],
        seed in any::<u64>(),
    ) {
        let p = load("gen.stec", &source(&s)).unwrap();
        let t = apply_taskloop_tls_with(&p, TransformOptions::default()).unwrap();
        let cfg = RunConfig {
            threads,
            sched,
            seed,
            exec: ExecMode::Sim { seed },
            ..RunConfig::default()
        };
        let r = run_transformed(&t, &cfg).unwrap();
        prop_assert_eq!(r.digest(), digest(&p, seed));
        prop_assert_eq!(r.retries.len() as i64, (N + s.strip - 1) / s.strip);
    }
}
