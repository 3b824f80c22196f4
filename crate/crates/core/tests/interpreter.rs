mod common;

use common::{feedback, fixture_scene, golden_cases, token_soup};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenecode::api::{ApiOptions, ToolContext};
use scenecode::interp::{self, ErrorKind, EvalLimits};
use scenecode::relations::RelationConfig;

#[test]
fn golden_programs_match_byte_exactly() {
    let cases = golden_cases();
    assert!(cases.len() >= 10);
    let mut failures = Vec::new();
    for case in cases {
        let actual = feedback(&case.source, &fixture_scene(&case.scene));
        if actual != case.expected {
            failures.push(format!("{}:\n  expected: {:?}\n  actual:   {:?}", case.name, case.expected, actual));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn token_soup_never_crashes_and_is_deterministic() {
    let scene = fixture_scene("study_room.json");
    let limits = EvalLimits { max_steps: 20_000, ..EvalLimits::default() };
    let cfg = RelationConfig::default();
    let options = ApiOptions::default();
    let ctx = ToolContext::new(&scene, &cfg, &options);
    let before = scene.canonical_dump();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let src = token_soup(&mut rng);
        let a = interp::format_feedback(&interp::run_program(&src, &ctx, &limits));
        let b = interp::format_feedback(&interp::run_program(&src, &ctx, &limits));
        assert_eq!(a, b, "nondeterministic on {src:?}");
        assert!(a.starts_with("Observation: "));
    }
    assert_eq!(before, scene.canonical_dump());
}

fn run(src: &str) -> interp::ExecResult {
    let scene = fixture_scene("study_room.json");
    let cfg = RelationConfig::default();
    let options = ApiOptions::default();
    let ctx = ToolContext::new(&scene, &cfg, &options);
    interp::run_program(src, &ctx, &EvalLimits::default())
}

fn out(src: &str) -> String {
    match run(src) {
        Ok(o) => o.lines.join("\n"),
        Err(e) => panic!("{src:?} failed: {e}"),
    }
}

fn err(src: &str) -> String {
    match run(src) {
        Ok(o) => panic!("{src:?} succeeded with {:?}", o.lines),
        Err(e) => e.to_string(),
    }
}

#[test]
fn python_semantics() {
    assert_eq!(out("print(7 // -2, 7 % -2, -7 % 3, 2 ** -1, 10 / 4)"), "-4 -1 2 0.5 2.5");
    assert_eq!(out("print(1 == 1.0, {1, 1.0, True}, 0.1 + 0.2)"), "True {1} 0.30000000000000004");
    assert_eq!(out("print([1, 2, 3][::-1], 'abcdef'[1:5:2], (1,)[0:])"), "[3, 2, 1] bd (1,)");
    assert_eq!(out("print(round(2.5), round(3.5), round(2.675, 2), round(-0.5))"), "2 4 2.67 0");
    assert_eq!(
        out("print(sorted(['b', 'a', 'c'], reverse=True), max([3, 1, 2]), min([], default=0))"),
        "['c', 'b', 'a'] 3 0"
    );
    assert_eq!(out("a, (b, c) = 1, [2, 3]\nprint(a + b + c)"), "6");
    assert_eq!(out("x = [1]\ny = x\ny += [2]\nprint(x)"), "[1, 2]");
    assert_eq!(
        out("print(f'{3.14159:.2f}|{42:>5}|{\"s\"!r}|{1e20}|{1/3}')"),
        "3.14|   42|'s'|1e+20|0.3333333333333333"
    );
    assert_eq!(out("print([x * y for x in range(3) if x for y in [10, 20]])"), "[10, 20, 20, 40]");
    assert_eq!(out("x = 5\nl = [x for x in range(2)]\nprint(x)"), "5");
    assert_eq!(
        out("print(1 < 2 < 3, 1 < 3 < 2, 'a' in 'cat', [1] in [[1]], None is None)"),
        "True False True True True"
    );
    assert_eq!(
        out("print('-'.join(['a', 'b']), 'A b'.lower().split(), '{} {x}'.format(1, x=2))"),
        "a-b ['a', 'b'] 1 2"
    );
    assert_eq!(
        out("for i in range(5):\n    if i == 1:\n        continue\n    if i == 3:\n        break\n    print(i)"),
        "0\n2"
    );
    assert_eq!(out("print(1, 2, sep=', ', end='!')"), "1, 2!");
    assert_eq!(
        out("print(str(1.0), int('12'), float('1.5'), abs(-3), sum([1, 2], 10), any([]), all([]))"),
        "1.0 12 1.5 3 13 False True"
    );
    assert_eq!(
        out("print(list(enumerate(['a'], start=1)), [] or 'x', 1 and 0, 1 if False else 2)"),
        "[(1, 'a')] x 0 2"
    );
    assert_eq!(out("s = {3, 1}\ns |= {2}\nprint(s, s - {1}, s & {1, 9}, len(s))"), "{1, 2, 3} {2, 3} {1} 3");
}

#[test]
fn golden_error_messages() {
    assert_eq!(err("print(1 / 0)"), "ZeroDivisionError: division by zero (line 1)");
    assert_eq!(err("\n\nx = [1, 2]\nx[5]"), "IndexError: list index out of range (line 4)");
    assert_eq!(err("'a' + 1"), "TypeError: can only concatenate str (not \"int\") to str (line 1)");
    assert_eq!(err("1 + 'a'"), "TypeError: unsupported operand type(s) for +: 'int' and 'str' (line 1)");
    assert_eq!(err("x = 1\nx.foo"), "AttributeError: 'int' object has no attribute 'foo' (line 2)");
    assert_eq!(err("a, b = [1, 2, 3]"), "ValueError: too many values to unpack (expected 2) (line 1)");
    assert_eq!(err("a, b, c = [1, 2]"), "ValueError: not enough values to unpack (expected 3, got 2) (line 1)");
    assert_eq!(
        err("{1, 2}[0]"),
        "TypeError: 'set' object is not subscriptable (iterate over it, or convert with list(...) first) (line 1)"
    );
    assert_eq!(err("[[1]] < [['a']]"), "TypeError: '<' not supported between instances of 'int' and 'str' (line 1)");
    assert_eq!(err("{[1]}"), "TypeError: unhashable type: 'list' (line 1)");
    assert_eq!(err("while True:\n    pass"), "SyntaxError: while is not allowed (line 1)");
    assert_eq!(err("def f():\n    pass"), "SyntaxError: def is not allowed (line 1)");
    assert_eq!(err("sorted([1], key=len)"), "TypeError: object of type 'int' has no len() (line 1)");
    assert_eq!(err("o = list(scene())[0]\no.color"),
        "AttributeError: 'ObjectAttribute' object has no attribute 'color'; use query_attribute(object=..., attribute_type=\"color\") (line 2)");
    assert_eq!(err("filter(scene(), 'table', 3)"), "APIError: filter() takes at most 2 arguments (3 given) (line 1)");
    assert_eq!(
        err("filter(object_set=scene(), cat='table')"),
        "APIError: filter() got an unexpected keyword argument 'cat' (expected: object_set, category) (line 1)"
    );
    assert!(err("relate_agent(object_set=scene(), relation='under')")
        .starts_with("APIError: relate_agent(): unknown relation 'under'; valid relations are: left, right"));
}

#[test]
fn limits_are_enforced() {
    let e = run("x = list(range(100001))").unwrap_err();
    assert_eq!(e.kind, ErrorKind::Limit);
    let e = run("x = 'ab' * 100000").unwrap_err();
    assert_eq!(e.kind, ErrorKind::Limit);
    let e = run("x = [1]\nfor i in range(20):\n    x = x + x").unwrap_err();
    assert_eq!(e.kind, ErrorKind::Limit);
    let e = run("x = 9223372036854775807 + 1").unwrap_err();
    assert_eq!(e.label, "OverflowError");
    let e = run("x = []\nx.append(x)\nprint(x == x, x)").unwrap();
    assert_eq!(e.lines, vec!["True [[...]]"]);
    let o = run("for i in range(5000):\n    print('0123456789')").unwrap();
    assert!(o.truncated);
    assert_eq!(o.lines.iter().map(|l| l.len() + 1).sum::<usize>() - 1, 4096);
}

#[test]
fn error_reports_carry_partial_output() {
    let text = feedback("print('a')\nprint('b')\nprint(c)", &fixture_scene("study_room.json"));
    assert_eq!(text, "Observation: a\nb\nNameError: name 'c' is not defined (line 3)");
}

#[test]
fn round_trip_pretty_print_of_golden_programs() {
    for case in golden_cases() {
        let Ok(program) = interp::parse(&case.source) else { continue };
        let printed = program.pretty();
        let reparsed = interp::parse(&printed).unwrap_or_else(|e| panic!("{}: {e}\n{printed}", case.name));
        assert_eq!(reparsed.pretty(), printed, "{}", case.name);
        if case.expected.contains("(line ") {
            // Comments are not preserved, so reported line numbers shift.
            continue;
        }
        let scene = fixture_scene(&case.scene);
        assert_eq!(feedback(&printed, &scene), case.expected, "{}", case.name);
    }
}

#[test]
fn parseable_soup_round_trips_through_the_pretty_printer() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut parsed = 0;
    for _ in 0..5000 {
        let src = token_soup(&mut rng);
        if let Ok(p) = interp::parse(&src) {
            parsed += 1;
            let printed = p.pretty();
            let again = interp::parse(&printed).unwrap_or_else(|e| panic!("{src:?} -> {printed:?}: {e}"));
            assert_eq!(again.pretty(), printed);
        }
    }
    assert!(parsed > 0);
}

#[test]
fn pathological_nesting_is_rejected_not_overflowed() {
    for (open, close) in [("(", ")"), ("[", "]"), ("-", ""), ("not ", ""), ("f(", ")"), ("x[", "]")] {
        let src = format!("y = {}1{}", open.repeat(5000), close.repeat(5000));
        let e = run(&src).unwrap_err();
        assert_eq!(e.kind, ErrorKind::Syntax, "{open}");
    }
    let mut src = String::new();
    for depth in 0..200 {
        src.push_str(&"    ".repeat(depth));
        src.push_str("if True:\n");
    }
    src.push_str(&"    ".repeat(200));
    src.push_str("pass\n");
    assert_eq!(run(&src).unwrap_err().kind, ErrorKind::Syntax);
}

#[test]
fn deepest_accepted_program_runs_on_a_small_stack() {
    let mut src = String::new();
    for depth in 0..38 {
        src.push_str(&"    ".repeat(depth));
        src.push_str(&format!("for i{depth} in [1]:\n"));
    }
    src.push_str(&"    ".repeat(38));
    let expr = |n: usize| format!("print({}1{})\n", "(-".repeat(n), ")".repeat(n));
    let deepest = (1..200).take_while(|n| interp::parse(&expr(*n)).is_ok()).last().unwrap();
    assert!(deepest >= 30, "deepest {deepest}");
    src.push_str(&expr(deepest));
    let handle = std::thread::Builder::new().stack_size(2 << 20).spawn(move || run(&src).map(|o| o.lines)).unwrap();
    let expected = if deepest % 2 == 1 { "-1" } else { "1" };
    assert_eq!(handle.join().unwrap().unwrap(), vec![expected]);
}
