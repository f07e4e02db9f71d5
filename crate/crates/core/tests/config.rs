use std::collections::BTreeMap;

use edgeguard_core::config::{knob_by_env, knobs, load, AppConfig, Knob, Origin};

struct Sample {
    knob: &'static Knob,
    file: String,
    env: String,
    file_extra: Vec<(String, String)>,
    env_extra: Vec<(String, String)>,
}

fn pairs(field: Option<&str>) -> Vec<(String, String)> {
    field
        .filter(|f| !f.is_empty())
        .map(|f| f.split(';').map(|kv| kv.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())).unwrap()).collect())
        .unwrap_or_default()
}

fn samples() -> Vec<Sample> {
    include_str!("data/knob_samples.tsv")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let cols: Vec<&str> = l.split('\t').collect();
            Sample {
                knob: knob_by_env(cols[0]).unwrap_or_else(|| panic!("unknown knob {}", cols[0])),
                file: cols[1].into(),
                env: cols[2].into(),
                file_extra: pairs(cols.get(3).copied()),
                env_extra: pairs(cols.get(4).copied()),
            }
        })
        .collect()
}

fn canonical(k: &Knob, raw: &str) -> String {
    let mut c = AppConfig::default();
    k.set(&mut c, raw).unwrap();
    k.get(&c)
}

fn toml_for(entries: &[(String, String)]) -> String {
    let mut tables: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for (env, value) in entries {
        let k = knob_by_env(env).unwrap();
        tables.entry(k.section.table()).or_default().push(format!("{} = {}", k.key, toml::Value::String(value.clone())));
    }
    tables.into_iter().map(|(t, lines)| format!("[{t}]\n{}\n", lines.join("\n"))).collect()
}

#[test]
fn every_knob_has_a_sample() {
    let covered: Vec<&str> = samples().iter().map(|s| s.knob.env).collect();
    let all: Vec<&str> = knobs().iter().map(|k| k.env).collect();
    assert_eq!(covered, all);
}

#[test]
fn precedence_per_knob() {
    let dir = tempfile::tempdir().unwrap();
    let defaults = AppConfig::default();
    for s in samples() {
        let k = s.knob;
        let (d, f, e) = (k.get(&defaults), canonical(k, &s.file), canonical(k, &s.env));
        assert!(d != f && f != e, "{}: samples must differ ({d}, {f}, {e})", k.env);

        let none = load(None, |_| None).unwrap();
        assert_eq!((k.get(&none.config), none.origins.get(k.env)), (d.clone(), None), "{}", k.env);

        let mut file_entries = s.file_extra.clone();
        file_entries.push((k.env.to_string(), s.file.clone()));
        let path = dir.path().join(format!("{}.toml", k.env));
        std::fs::write(&path, toml_for(&file_entries)).unwrap();
        let from_file = load(Some(&path), |_| None).unwrap_or_else(|e| panic!("{}: {e}", k.env));
        assert_eq!(k.get(&from_file.config), f, "{}", k.env);
        assert_eq!(from_file.origins[k.env], Origin::File);

        let mut env: BTreeMap<String, String> = s.env_extra.iter().cloned().collect();
        env.insert(k.env.to_string(), s.env.clone());
        let both = load(Some(&path), |name| env.get(name).cloned()).unwrap_or_else(|e| panic!("{}: {e}", k.env));
        assert_eq!(k.get(&both.config), e, "{}", k.env);
        assert_eq!(both.origins[k.env], Origin::Env);

        let env_only = load(None, |name| env.get(name).cloned()).unwrap_or_else(|e| panic!("{}: {e}", k.env));
        assert_eq!(k.get(&env_only.config), e, "{}", k.env);
    }
}
