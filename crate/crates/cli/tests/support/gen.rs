//! Random loop-free MJIR programs for the soundness oracle.
//!
//! Programs stick to what the interpreter and the analysis both model
//! exactly: paths are built only from constants and path tokens, every
//! container holds one value, every variable is assigned before any branch,
//! and no unmodelled framework call feeds a path.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Generated {
    pub source: String,
    /// Branch condition variables; every 0/1 assignment is a valuation.
    pub conds: Vec<String>,
}

impl Generated {
    pub fn branch_free(&self) -> bool {
        self.conds.is_empty()
    }
}

const STRS: [&str; 4] = ["s0", "s1", "s2", "s3"];
const DATA: [&str; 2] = ["d0", "d1"];
const EVID: [&str; 4] = ["e0", "e1", "e2", "e3"];
const CONSTS: [&str; 10] = ["notes", "a.txt", "log_", ".db", "cache/", "img", "", "x/y.dat", "track", "-"];

struct Gen {
    rng: ChaCha8Rng,
    pkg: String,
    locals: Vec<String>,
    tmp: usize,
    labels: usize,
    conds: Vec<String>,
}

impl Gen {
    fn fresh(&mut self, ty: &str) -> String {
        self.tmp += 1;
        let name = format!("t{}", self.tmp);
        self.locals.push(format!("local {ty} {name};"));
        name
    }

    fn s(&mut self) -> &'static str {
        STRS.choose(&mut self.rng).unwrap()
    }

    fn konst(&mut self) -> String {
        format!("{:?}", CONSTS.choose(&mut self.rng).unwrap())
    }

    /// Something carrying (or not carrying) evidence, for written data.
    fn datum(&mut self) -> String {
        match self.rng.gen_range(0..10) {
            0..=3 => DATA.choose(&mut self.rng).unwrap().to_string(),
            4..=6 => EVID.choose(&mut self.rng).unwrap().to_string(),
            7..=8 => self.s().to_string(),
            _ => "\"const\"".to_string(),
        }
    }

    fn string_stmt(&mut self, out: &mut Vec<String>) {
        let pkg = self.pkg.clone();
        let dst = self.s();
        match self.rng.gen_range(0..15) {
            0 => out.push(format!("{dst} = {};", self.konst())),
            1 => {
                let src = self.s();
                out.push(format!("{dst} = {src};"));
            }
            2 | 3 => {
                let (a, b) = (self.s(), self.s());
                out.push(match self.rng.gen_range(0..3) {
                    0 => format!("{dst} = {a} + {b};"),
                    1 => format!("{dst} = {a} + {};", self.konst()),
                    _ => format!("{dst} = {} + {a};", self.konst()),
                });
            }
            4 => {
                let (a, b) = (self.s(), self.s());
                out.push(format!("{dst} = {a}.concat({b});"));
            }
            5 => {
                let sb = self.fresh("StringBuilder");
                let (a, b) = (self.s(), self.s());
                out.push(format!("{sb} = new StringBuilder;"));
                if self.rng.gen_bool(0.5) {
                    out.push(format!("{sb}.<init>();"));
                    out.push(format!("{sb}.append({a});"));
                } else {
                    out.push(format!("{sb}.<init>({a});"));
                }
                out.push(format!("{sb}.append({b});"));
                out.push(format!("{dst} = {sb}.toString();"));
            }
            6 => {
                let t = self.fresh("long");
                let clock = ["java.lang.System.currentTimeMillis", "android.os.SystemClock.elapsedRealtime"]
                    .choose(&mut self.rng)
                    .unwrap();
                out.push(format!("{t} = {clock}();"));
                out.push(format!("{dst} = java.lang.String.valueOf({t});"));
            }
            7 => {
                let d = self.fresh("java.util.Date");
                let t = self.fresh("long");
                out.push(format!("{d} = new java.util.Date;"));
                out.push(format!("{d}.<init>();"));
                out.push(format!("{t} = {d}.getTime();"));
                out.push(format!("{dst} = java.lang.Long.toString({t});"));
            }
            8 => {
                let u = self.fresh("java.util.UUID");
                out.push(format!("{u} = java.util.UUID.randomUUID();"));
                out.push(format!("{dst} = {u}.toString();"));
            }
            9 => {
                let i = self.fresh("android.content.Intent");
                out.push(format!("{i} = this.getIntent();"));
                out.push(format!("{dst} = {i}.getStringExtra(\"name\");"));
            }
            10 => {
                if self.rng.gen_bool(0.5) {
                    let src = self.s();
                    out.push(format!("this.f0 = {src};"));
                } else {
                    out.push(format!("{dst} = this.f0;"));
                }
            }
            11 => {
                if self.rng.gen_bool(0.5) {
                    let src = self.s();
                    out.push(format!("{pkg}.Main.g0 = {src};"));
                } else {
                    out.push(format!("{dst} = {pkg}.Main.g0;"));
                }
            }
            12 => {
                let b = self.fresh(&format!("{pkg}.Box"));
                let src = self.s();
                out.push(format!("{b} = new {pkg}.Box;"));
                out.push(format!("{b}.v = {src};"));
                out.push(format!("{dst} = {b}.v;"));
            }
            13 => {
                let k = self.rng.gen_range(0..2);
                if self.rng.gen_bool(0.5) {
                    let src = self.s();
                    out.push(format!("sa[{k}] = {src};"));
                } else {
                    out.push(format!("{dst} = sa[{k}];"));
                }
            }
            _ => {
                let (a, b) = (self.s(), self.s());
                out.push(if self.rng.gen_bool(0.5) {
                    format!("{dst} = this.suffix({a});")
                } else {
                    format!("{dst} = {pkg}.Main.pick({a}, {b});")
                });
            }
        }
    }

    fn data_stmt(&mut self, out: &mut Vec<String>) {
        let pkg = self.pkg.clone();
        let dst = DATA.choose(&mut self.rng).unwrap();
        let e = EVID.choose(&mut self.rng).unwrap();
        match self.rng.gen_range(0..7) {
            0 => out.push(format!("{dst} = {e};")),
            1 => {
                let f = EVID.choose(&mut self.rng).unwrap();
                out.push(format!("{dst} = {e} + {f};"));
            }
            2 => {
                let l = self.fresh("java.util.ArrayList");
                out.push(format!("{l} = new java.util.ArrayList;"));
                out.push(format!("{l}.<init>();"));
                out.push(format!("{l}.add({e});"));
                out.push(format!("{dst} = {l}.get(0);"));
            }
            3 => {
                let b = self.fresh(&format!("{pkg}.Box"));
                out.push(format!("{b} = new {pkg}.Box;"));
                out.push(format!("{b}.d = {e};"));
                out.push(format!("{dst} = {b}.d;"));
            }
            4 => {
                let sb = self.fresh("StringBuilder");
                out.push(format!("{sb} = new StringBuilder;"));
                out.push(format!("{sb}.<init>();"));
                out.push(format!("{sb}.append({e});"));
                out.push(format!("{dst} = {sb}.toString();"));
            }
            5 => {
                let k = self.rng.gen_range(0..2);
                out.push(format!("da[{k}] = {e};"));
                out.push(format!("{dst} = da[{k}];"));
            }
            _ => {
                let other = DATA.choose(&mut self.rng).unwrap();
                out.push(format!("{dst} = {other};"));
            }
        }
    }

    fn sink_stmt(&mut self, out: &mut Vec<String>) {
        let name = self.s();
        let data = self.datum();
        match self.rng.gen_range(0..6) {
            0 => {
                let o = self.fresh("java.io.FileOutputStream");
                out.push(format!("{o} = this.openFileOutput({name}, 0);"));
                out.push(format!("{o}.write({data});"));
            }
            1 => {
                let dir = self.fresh("java.io.File");
                let f = self.fresh("java.io.File");
                let w = self.fresh("java.io.FileWriter");
                let base = [
                    "this.getFilesDir()",
                    "this.getCacheDir()",
                    "android.os.Environment.getExternalStorageDirectory()",
                    "this.getExternalFilesDir(\"docs\")",
                ]
                .choose(&mut self.rng)
                .unwrap();
                out.push(format!("{dir} = {base};"));
                out.push(format!("{f} = new java.io.File;"));
                out.push(format!("{f}.<init>({dir}, {name});"));
                out.push(format!("{w} = new java.io.FileWriter;"));
                out.push(format!("{w}.<init>({f});"));
                out.push(format!("{w}.write({data});"));
            }
            2 => {
                let p = self.fresh("android.content.SharedPreferences");
                let ed = self.fresh("android.content.SharedPreferences$Editor");
                out.push(format!("{p} = this.getSharedPreferences({name}, 0);"));
                out.push(format!("{ed} = {p}.edit();"));
                out.push(format!("{ed}.putString(\"k\", {data});"));
            }
            3 => {
                let db = self.fresh("android.database.sqlite.SQLiteDatabase");
                let cv = self.fresh("android.content.ContentValues");
                out.push(format!("{db} = this.openOrCreateDatabase({name}, 0, null);"));
                out.push(format!("{cv} = new android.content.ContentValues;"));
                out.push(format!("{cv}.put(\"c\", {data});"));
                out.push(format!("{db}.insert(\"t\", null, {cv});"));
            }
            4 => {
                let full = self.fresh("String");
                let o = self.fresh("java.io.FileOutputStream");
                out.push(format!("{full} = \"/sdcard/\" + {name};"));
                out.push(format!("{o} = new java.io.FileOutputStream;"));
                out.push(format!("{o}.<init>({full});"));
                out.push(format!("{o}.write({data});"));
            }
            _ => {
                let p = self.fresh("android.content.SharedPreferences");
                let ed = self.fresh("android.content.SharedPreferences$Editor");
                out.push(format!("{p} = this.getPreferences(0);"));
                out.push(format!("{ed} = {p}.edit();"));
                out.push(format!("{ed}.putString(\"k\", {data});"));
            }
        }
    }

    fn simple(&mut self, out: &mut Vec<String>) {
        match self.rng.gen_range(0..10) {
            0..=4 => self.string_stmt(out),
            5..=7 => self.data_stmt(out),
            _ => self.sink_stmt(out),
        }
    }

    fn branch(&mut self, out: &mut Vec<String>) {
        let c = format!("c{}", self.conds.len());
        self.locals.push(format!("local int {c};"));
        self.conds.push(c.clone());
        self.labels += 1;
        let (then_l, end_l) = (format!("L{}a", self.labels), format!("L{}b", self.labels));
        out.push(format!("if {c} goto {then_l};"));
        for _ in 0..self.rng.gen_range(1..=3) {
            self.simple(out);
        }
        if self.rng.gen_bool(0.5) {
            out.push(format!("goto {end_l};"));
            out.push(format!("{then_l}:"));
            for _ in 0..self.rng.gen_range(1..=3) {
                self.simple(out);
            }
            out.push(format!("{end_l}:"));
        } else {
            out.push(format!("{then_l}:"));
        }
    }
}

/// A program whose shape depends only on `seed`. Roughly a third of the
/// programs have no branches.
pub fn generate(seed: u64) -> Generated {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        pkg: format!("gen.p{seed}"),
        locals: Vec::new(),
        tmp: 0,
        labels: 0,
        conds: Vec::new(),
    };
    let pkg = g.pkg.clone();
    let branches = match g.rng.gen_range(0..3) {
        0 => 0,
        1 => 1,
        _ => 2,
    };
    let mut body = Vec::new();
    let n = g.rng.gen_range(5..=12);
    let mut branch_at: Vec<usize> = (0..branches).map(|_| g.rng.gen_range(0..n)).collect();
    branch_at.sort_unstable();
    for i in 0..n {
        if branch_at.contains(&i) {
            g.branch(&mut body);
        } else {
            g.simple(&mut body);
        }
    }
    for _ in 0..g.rng.gen_range(1..=2) {
        g.sink_stmt(&mut body);
    }

    let mut prelude = vec![
        "lm = this.getSystemService(\"location\");".to_string(),
        "loc = lm.getLastKnownLocation(\"gps\");".to_string(),
        "e0 = loc.getLatitude();".to_string(),
        "ev = this.findViewById(1);".to_string(),
        "e1 = ev.getText();".to_string(),
        "e2 = java.lang.System.nanoTime();".to_string(),
        "wv = new android.webkit.WebView;".to_string(),
        "e3 = wv.getUrl();".to_string(),
        "d0 = \"none\";".to_string(),
        "d1 = \"none\";".to_string(),
        "sa = newarray String[2];".to_string(),
        "da = newarray Object[2];".to_string(),
        "da[0] = \"none\";".to_string(),
        "da[1] = \"none\";".to_string(),
    ];
    for (i, s) in STRS.iter().enumerate() {
        let c = g.konst();
        prelude.push(format!("{s} = {c};"));
        if i < 2 {
            prelude.push(format!("sa[{i}] = {s};"));
        }
    }
    prelude.push("this.f0 = s0;".into());
    prelude.push(format!("{pkg}.Main.g0 = s1;"));

    let mut src = String::new();
    src.push_str(&format!("package {pkg};\nentry {pkg}.Main.onCreate;\n\n"));
    src.push_str(&format!("class {pkg}.Main extends android.app.Activity kind activity {{\n"));
    src.push_str("    field instance String f0;\n    field static String g0;\n\n");
    src.push_str("    method onCreate(android.os.Bundle b) {\n");
    for l in [
        "local android.location.LocationManager lm;",
        "local android.location.Location loc;",
        "local android.widget.EditText ev;",
        "local android.webkit.WebView wv;",
        "local double e0;",
        "local Object e1, e3, d0, d1;",
        "local long e2;",
        "local String s0, s1, s2, s3;",
        "local String[] sa;",
        "local Object[] da;",
    ] {
        src.push_str(&format!("        {l}\n"));
    }
    for l in &g.locals {
        src.push_str(&format!("        {l}\n"));
    }
    for s in prelude.iter().chain(body.iter()) {
        if s.ends_with(':') {
            src.push_str(&format!("      {s}\n"));
        } else {
            src.push_str(&format!("        {s}\n"));
        }
    }
    src.push_str("        return;\n    }\n\n");
    src.push_str("    method suffix(String x) : String {\n        local String r;\n        r = x + \"_v\";\n        return r;\n    }\n\n");
    src.push_str("    method static pick(String a, String b) : String {\n        return a;\n    }\n}\n\n");
    src.push_str(&format!(
        "class {pkg}.Box {{\n    field instance String v;\n    field instance Object d;\n}}\n"
    ));
    Generated {
        source: src,
        conds: g.conds,
    }
}
