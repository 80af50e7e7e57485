//! Shapes for realistic RUN payload idioms: the chained-and-cleaned
//! install blocks, pipe-to-shell installers, redirect-heavy probes, and
//! substitution-bearing commands that dominate real Dockerfiles.

use dockast_core::ast::{AstNode, DocumentRoot, FileSha};
use dockast_core::docker::parse_dockerfile;
use dockast_core::schema::{enrich, SchemaSet};
use dockast_core::shell::{expand_run_nodes, parse_shell};

fn script(payload: &str) -> AstNode {
    parse_shell(payload).unwrap()
}

fn types_of(node: &AstNode) -> Vec<&str> {
    node.children().iter().map(|c| c.node_type()).collect()
}

fn command_names(root: &AstNode) -> Vec<String> {
    root.find_subtrees(|n| n.node_type() == "BASH-COMMAND-COMMAND")
        .iter()
        .filter_map(|(_, n)| n.children().first().and_then(|c| c.value()))
        .map(str::to_string)
        .collect()
}

#[test]
fn official_image_install_block() {
    // Continuations joined upstream; the payload arrives as one line.
    let root = script(
        "set -eux; apt-get update; apt-get install -y --no-install-recommends ca-certificates; rm -rf /var/lib/apt/lists/*",
    );
    assert_eq!(root.children().len(), 1);
    let semi = &root.children()[0];
    assert_eq!(semi.node_type(), "BASH-SEMI");
    assert_eq!(
        command_names(&root),
        vec!["set", "apt-get", "apt-get", "rm"]
    );
}

#[test]
fn pipe_to_shell_installer() {
    let root = script("curl -fsSL https://deb.nodesource.com/setup_8.x | bash -");
    let pipe = &root.children()[0];
    assert_eq!(pipe.node_type(), "BASH-PIPE");
    assert_eq!(command_names(&root), vec!["curl", "bash"]);
    // The lone dash stays an ordinary argument word.
    let bash_args = pipe.children()[1]
        .children()
        .iter()
        .find(|c| c.node_type() == "BASH-COMMAND-ARGS")
        .unwrap();
    assert_eq!(bash_args.children()[0].value(), Some("-"));
}

#[test]
fn redirects_and_dup_specs() {
    let root = script("command -v node >/dev/null 2>&1 || exit 1");
    let or = &root.children()[0];
    assert_eq!(or.node_type(), "BASH-OR-IF");
    let probe = &or.children()[0];
    let redirect_ops: Vec<&str> = probe
        .children()
        .iter()
        .filter(|c| c.node_type() == "BASH-REDIRECT")
        .map(|c| c.value().unwrap())
        .collect();
    assert_eq!(redirect_ops, vec![">", "2>&1"]);

    let root =
        script("echo \"deb http://archive.ubuntu.com xenial main\" >> /etc/apt/sources.list");
    let echo = &root.children()[0];
    let redirect = echo
        .children()
        .iter()
        .find(|c| c.node_type() == "BASH-REDIRECT")
        .unwrap();
    assert_eq!(redirect.value(), Some(">>"));
    assert_eq!(
        redirect.children()[0].value(),
        Some("/etc/apt/sources.list")
    );
}

#[test]
fn bracket_test_is_an_ordinary_command() {
    let root = script("[ -f /etc/os-release ] || true");
    assert_eq!(command_names(&root), vec!["[", "true"]);
}

#[test]
fn command_substitution_poisons_only_its_word() {
    let root = script("docker-php-ext-install -j$(nproc) gd mysqli");
    let msc = &root.children()[0];
    let args = msc
        .children()
        .iter()
        .find(|c| c.node_type() == "BASH-COMMAND-ARGS")
        .unwrap();
    assert_eq!(
        types_of(args),
        vec!["UNKNOWN-BASH-FRAGMENT", "BASH-LITERAL", "BASH-LITERAL"]
    );
    assert_eq!(args.children()[0].value(), Some("-j$(nproc)"));
}

#[test]
fn sed_program_survives_single_quotes() {
    let root = script(r#"sed -i 's/^#\s*\(deb.*universe\)$/\1/g' /etc/apt/sources.list"#);
    let msc = &root.children()[0];
    let args = msc
        .children()
        .iter()
        .find(|c| c.node_type() == "BASH-COMMAND-ARGS")
        .unwrap();
    assert_eq!(args.children()[1].node_type(), "BASH-SINGLE-QUOTED");
    assert_eq!(
        args.children()[1].value(),
        Some(r#"s/^#\s*\(deb.*universe\)$/\1/g"#)
    );
}

#[test]
fn export_with_interpolated_assignment_argument() {
    let root = script("export PATH=/opt/bin:$PATH");
    let msc = &root.children()[0];
    assert_eq!(msc.node_type(), "MAYBE-SEMANTIC-COMMAND");
    let args = msc
        .children()
        .iter()
        .find(|c| c.node_type() == "BASH-COMMAND-ARGS")
        .unwrap();
    // An assignment-shaped word after the command name is data, and the
    // interpolation keeps its raw spelling.
    assert_eq!(args.children()[0].node_type(), "BASH-LITERAL");
    assert_eq!(args.children()[0].value(), Some("PATH=/opt/bin:$PATH"));
}

#[test]
fn enrichment_covers_chained_installs_and_leaves_the_rest() {
    let source = "FROM node:8\nRUN cd /app && npm install --production && npm cache clean --force\nRUN wget -q https://example.com/tool.tar.gz && tar -xzf tool.tar.gz -C /usr/local\n";
    let parsed = parse_dockerfile(source).unwrap();
    let doc = DocumentRoot::new(FileSha::of_bytes(source.as_bytes()), parsed.root).unwrap();
    let phase2 = expand_run_nodes(&doc).doc;
    let enriched = enrich(&phase2, SchemaSet::bundled());
    let all_types: Vec<String> = enriched
        .doc
        .root()
        .pre_order()
        .map(|(_, n)| n.node_type().to_string())
        .collect();
    assert!(all_types.iter().any(|t| t == "SC-NPM-INSTALL"));
    assert!(all_types.iter().any(|t| t == "SC-NPM-CACHE-CLEAN"));
    assert!(all_types.iter().any(|t| t == "SC-WGET"));
    assert!(all_types.iter().any(|t| t == "SC-TAR"));
    // `cd` has no schema and stays a plain command.
    assert!(all_types.iter().any(|t| t == "MAYBE-SEMANTIC-COMMAND"));
    assert_eq!(enriched.substitutions.len(), 4);

    let cache_clean = enriched
        .doc
        .root()
        .find_subtrees(|n| n.node_type() == "SC-NPM-CACHE-CLEAN");
    assert_eq!(types_of(cache_clean[0].1), vec!["SC-NPM-F-FORCE"]);
}

#[test]
fn powershell_style_payload_stays_structured() {
    let root = script("powershell -Command \"Write-Host ('hello {0}' -f $env)\"");
    // The double-quoted program contains an interpolation-free prefix and
    // a variable; whatever happens it must not crash and the command
    // name survives.
    assert_eq!(command_names(&root)[0], "powershell");
}

#[test]
fn pathological_nesting_stays_decodable() {
    // Nesting beyond the parser's cap degrades to a fragment so emitted
    // lines stay within downstream JSON nesting limits.
    let mut payload = String::new();
    for _ in 0..200 {
        payload.push('(');
    }
    payload.push_str("echo hi");
    for _ in 0..200 {
        payload.push(')');
    }
    let started = std::time::Instant::now();
    let root = parse_shell(&payload).unwrap();
    assert!(started.elapsed() < std::time::Duration::from_secs(1));
    let subshells = root
        .find_subtrees(|n| n.node_type() == "BASH-SUBSHELL")
        .len();
    assert!(subshells <= 20, "{subshells}");
    assert_eq!(
        root.find_subtrees(|n| n.node_type() == "UNKNOWN-BASH-FRAGMENT")
            .len(),
        1
    );
    round_trips(root);
}

#[test]
fn long_connector_chains_stay_decodable() {
    // Official images chain dozens of commands; flattened connectors keep
    // the tree shallow enough to re-read.
    let chained = (0..120)
        .map(|i| format!("step{i}"))
        .collect::<Vec<_>>()
        .join(" && ");
    let root = parse_shell(&chained).unwrap();
    let and_if = &root.children()[0];
    assert_eq!(and_if.node_type(), "BASH-AND-IF");
    assert_eq!(and_if.children().len(), 120);
    round_trips(root);

    let listed = (0..120)
        .map(|i| format!("step{i}"))
        .collect::<Vec<_>>()
        .join("; ");
    round_trips(parse_shell(&listed).unwrap());
}

/// Serializing and re-reading the document must succeed: emitted lines
/// may never exceed what the decoder accepts.
fn round_trips(script_node: AstNode) {
    let run = AstNode::branch("DOCKER-RUN", vec![script_node]);
    let doc = DocumentRoot::new(
        FileSha::of_bytes(b"nesting"),
        AstNode::branch("DOCKER-FILE", vec![run]),
    )
    .unwrap();
    let line = dockast_core::serialize_jsonl(&doc);
    let back = dockast_core::deserialize_jsonl(&line).expect("emitted line re-reads");
    assert_eq!(back, doc);
}
