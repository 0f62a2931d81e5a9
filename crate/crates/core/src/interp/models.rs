//! Concrete behaviour of the framework APIs the interpreter knows about.

use super::{concat_text, lit, token_span, Frame, Interp, Kind, Text, Value};
use crate::taint::Placeholder;

pub(super) struct Ctx<'a, 'f> {
    pub frame: &'a mut Frame<'f>,
    pub base_var: Option<&'a str>,
    pub this: Value,
    pub args: &'a [Value],
}

impl Ctx<'_, '_> {
    fn arg(&self, n: usize) -> Value {
        self.args.get(n - 1).cloned().unwrap_or_else(Value::null)
    }

    /// Overwrites what the receiver variable denotes, as a constructor
    /// filling in a fresh object does.
    fn set_base(&mut self, labels: crate::taint::EvSet, text: Option<Text>) {
        self.this.labels = labels.clone();
        self.this.text = text.clone();
        if let Some(v) = self.base_var {
            if let Some(x) = self.frame.locals.get_mut(v) {
                x.labels = labels;
                x.text = text;
            }
        }
    }
}

const STREAMS: &[&str] = &[
    "java.io.FileOutputStream",
    "java.io.FileWriter",
    "java.io.OutputStreamWriter",
    "java.io.BufferedWriter",
    "java.io.PrintWriter",
    "java.io.BufferedOutputStream",
    "java.io.DataOutputStream",
    "java.io.PrintStream",
    "java.io.RandomAccessFile",
];

const EDITOR: &str = "android.content.SharedPreferences$Editor";

fn union(a: &Value, b: &Value) -> crate::taint::EvSet {
    a.labels.union(&b.labels).cloned().collect()
}

impl Interp<'_> {
    fn pkg_dir(&self, rest: &str) -> Text {
        lit(&format!("/data/data/{}/{rest}", self.program.package_name))
    }

    fn path_value(&self, class: &str, prefix: Text, parts: &[&Value], suffix: &str) -> Value {
        let mut text = Some(prefix);
        let mut labels = crate::taint::EvSet::new();
        for p in parts {
            text = concat_text(&text, &p.text);
            labels.extend(p.labels.iter().cloned());
        }
        Value {
            kind: Kind::Ext(class.to_string()),
            labels,
            text: concat_text(&text, &Some(lit(suffix))),
        }
    }

    fn obj_field(&self, v: &Value, field: &str) -> Option<Value> {
        match v.kind {
            Kind::Obj(id) => self.objects[id].fields.get(field).cloned(),
            _ => None,
        }
    }

    fn set_obj_field(&mut self, v: &Value, field: &str, x: Value) {
        if let Kind::Obj(id) = v.kind {
            self.objects[id].fields.insert(field.to_string(), x);
        }
    }

    fn push_elem(&mut self, v: &Value, x: Value) {
        if let Kind::Obj(id) = v.kind {
            let o = &mut self.objects[id];
            let next = o.elems.keys().next_back().map_or(0, |k| k + 1);
            o.elems.insert(next, x);
        }
    }

    fn elem(&self, v: &Value, i: i64) -> Value {
        match v.kind {
            Kind::Obj(id) => self.objects[id].elems.get(&i).cloned().unwrap_or_else(Value::null),
            _ => Value::null(),
        }
    }

    /// Runs the model for `class.name/arity` if there is one.
    pub(super) fn model(&mut self, cx: &mut Ctx, class: &str, name: &str, arity: usize) -> Option<Value> {
        let ctx_class = "android.content.Context";
        let r = match (class, name, arity) {
            (c, "getFilesDir", 0) if c == ctx_class => Value::ext("java.io.File", self.pkg_dir("files/")),
            (c, "getCacheDir", 0) if c == ctx_class => Value::ext("java.io.File", self.pkg_dir("cache/")),
            (c, "getNoBackupFilesDir", 0) if c == ctx_class => Value::ext("java.io.File", self.pkg_dir("no_backup/")),
            (c, "getCodeCacheDir", 0) if c == ctx_class => Value::ext("java.io.File", self.pkg_dir("code_cache/")),
            (c, "getExternalCacheDir", 0) if c == ctx_class => Value::ext(
                "java.io.File",
                lit(&format!("/sdcard/Android/data/{}/cache/", self.program.package_name)),
            ),
            (c, "getObbDir", 0) if c == ctx_class => Value::ext(
                "java.io.File",
                lit(&format!("/sdcard/Android/obb/{}/", self.program.package_name)),
            ),
            (c, "getExternalFilesDir", 1) if c == ctx_class => {
                let prefix = lit(&format!("/sdcard/Android/data/{}/files/", self.program.package_name));
                subdir(prefix, &cx.arg(1))
            }
            (c, "getDir", 2) if c == ctx_class => {
                self.path_value("java.io.File", self.pkg_dir("app_"), &[&cx.arg(1)], "/")
            }
            (c, "getDatabasePath", 1) if c == ctx_class => {
                self.path_value("java.io.File", self.pkg_dir("databases/"), &[&cx.arg(1)], "")
            }
            (c, "getFileStreamPath", 1) if c == ctx_class => {
                self.path_value("java.io.File", self.pkg_dir("files/"), &[&cx.arg(1)], "")
            }
            (c, "openFileOutput", 2) if c == ctx_class => {
                self.path_value("java.io.FileOutputStream", self.pkg_dir("files/"), &[&cx.arg(1)], "")
            }
            (c, "getSharedPreferences", 2) if c == ctx_class => self.path_value(
                "android.content.SharedPreferences",
                self.pkg_dir("shared_prefs/"),
                &[&cx.arg(1)],
                ".xml",
            ),
            (c, "openOrCreateDatabase", 3) if c == ctx_class => self.path_value(
                "android.database.sqlite.SQLiteDatabase",
                self.pkg_dir("databases/"),
                &[&cx.arg(1)],
                "",
            ),
            (c, "startActivity" | "startService" | "sendBroadcast", 1) if c == ctx_class => {
                self.started.push(cx.arg(1));
                Value::null()
            }
            ("android.app.Activity", "startActivityForResult", 2) => {
                self.started.push(cx.arg(1));
                Value::null()
            }
            ("android.app.Activity", "getIntent", 0) => match self.started.last() {
                Some(i) => i.clone(),
                None => Value {
                    kind: Kind::Ext("android.content.Intent".into()),
                    ..Value::null()
                },
            },
            ("android.app.Activity", "getPreferences", 1) => {
                let class = self.context_class(cx);
                let local = self.program.local_class_name(&class).to_string();
                Value::ext(
                    "android.content.SharedPreferences",
                    self.pkg_dir(&format!("shared_prefs/{local}.xml")),
                )
            }
            ("android.preference.PreferenceManager", "getDefaultSharedPreferences", 1) => {
                let pkg = self.program.package_name.clone();
                Value::ext(
                    "android.content.SharedPreferences",
                    self.pkg_dir(&format!("shared_prefs/{pkg}_preferences.xml")),
                )
            }
            ("android.database.sqlite.SQLiteDatabase", "openOrCreateDatabase", 2)
            | ("android.database.sqlite.SQLiteDatabase", "openDatabase", 3) => {
                let a = cx.arg(1);
                Value {
                    kind: Kind::Ext("android.database.sqlite.SQLiteDatabase".into()),
                    ..a
                }
            }
            ("android.os.Environment", "getExternalStorageDirectory", 0) => Value::ext("java.io.File", lit("/sdcard/")),
            ("android.os.Environment", "getExternalStoragePublicDirectory", 1) => subdir(lit("/sdcard/"), &cx.arg(1)),
            ("android.os.Environment", "getDataDirectory", 0) => Value::ext("java.io.File", lit("/data/")),
            ("android.os.Environment", "getDownloadCacheDirectory", 0) => Value::ext("java.io.File", lit("/cache/")),

            ("java.io.File", "<init>", 1) => {
                let a = cx.arg(1);
                cx.set_base(a.labels, a.text);
                Value::null()
            }
            ("java.io.File", "<init>", 2) => {
                let (a, b) = (cx.arg(1), cx.arg(2));
                let text = match (&a.text, &b.text) {
                    (Some(p), Some(c)) => Some(file_join(p, c)),
                    _ => None,
                };
                cx.set_base(union(&a, &b), text);
                Value::null()
            }
            ("java.io.File", "getPath" | "getAbsolutePath" | "getCanonicalPath" | "toString", 0) => {
                cx.this.to_string_value()
            }
            ("java.io.File", "getAbsoluteFile", 0) => cx.this.clone(),
            (c, "<init>", 1 | 2) if STREAMS.contains(&c) => {
                let a = cx.arg(1);
                cx.set_base(a.labels, a.text);
                Value::null()
            }

            ("java.lang.String", "<init>", 1) => {
                let a = cx.arg(1);
                if let Some(v) = cx.base_var {
                    cx.frame.locals.insert(v.to_string(), a.to_string_value());
                }
                Value::null()
            }
            ("java.lang.String", "concat", 1) => {
                let (a, b) = (cx.this.clone(), cx.arg(1));
                Value {
                    kind: Kind::Str(format!("{}{}", a.display(), b.display())),
                    labels: union(&a, &b),
                    text: concat_text(&a.text, &b.text),
                }
            }
            ("java.lang.String", "toString" | "intern" | "toCharArray", 0) | ("java.lang.String", "getBytes", 0 | 1) => {
                cx.this.to_string_value()
            }
            ("java.lang.String", "valueOf" | "copyValueOf", 1)
            | ("java.lang.Integer" | "java.lang.Long" | "java.lang.Double", "toString", 1) => cx.arg(1).to_string_value(),

            ("java.lang.StringBuilder" | "java.lang.StringBuffer", "<init>", 0) => {
                let this = cx.this.clone();
                self.set_obj_field(&this, "$str", Value::string(lit("")));
                Value::null()
            }
            ("java.lang.StringBuilder" | "java.lang.StringBuffer", "<init>", 1) => {
                let this = cx.this.clone();
                self.set_obj_field(&this, "$str", cx.arg(1).to_string_value());
                Value::null()
            }
            ("java.lang.StringBuilder" | "java.lang.StringBuffer", "append", 1) => {
                let this = cx.this.clone();
                let cur = self.obj_field(&this, "$str").unwrap_or_else(|| Value::string(lit("")));
                let b = cx.arg(1);
                let next = Value {
                    kind: Kind::Str(format!("{}{}", cur.display(), b.display())),
                    labels: union(&cur, &b),
                    text: concat_text(&cur.text, &b.text),
                };
                self.set_obj_field(&this, "$str", next);
                this
            }
            ("java.lang.StringBuilder" | "java.lang.StringBuffer", "toString", 0) => {
                self.obj_field(&cx.this, "$str").unwrap_or_else(|| Value::string(lit("")))
            }

            ("java.util.Collection" | "java.util.List" | "java.util.Set", "add", 1) => {
                let this = cx.this.clone();
                self.push_elem(&this, cx.arg(1));
                Value::int(1)
            }
            ("java.util.List", "add", 2) | ("java.util.List", "set", 2) => {
                if let Kind::Obj(id) = cx.this.kind {
                    let i = cx.arg(1).as_int();
                    self.objects[id].elems.insert(i, cx.arg(2));
                }
                Value::null()
            }
            ("java.util.List", "get" | "remove", 1) => self.elem(&cx.this, cx.arg(1).as_int()),
            ("java.util.Collection", "iterator", 0) | ("java.util.Map", "values", 0) => {
                let this = cx.this.clone();
                self.set_obj_field(&this, "$cursor", Value::int(0));
                this
            }
            ("java.util.Iterator", "next", 0) => {
                let this = cx.this.clone();
                let i = self.obj_field(&this, "$cursor").map_or(0, |v| v.as_int());
                self.set_obj_field(&this, "$cursor", Value::int(i + 1));
                let keys: Vec<i64> = match this.kind {
                    Kind::Obj(id) => self.objects[id].elems.keys().copied().collect(),
                    _ => vec![],
                };
                match keys.get(i as usize) {
                    Some(k) => self.elem(&this, *k),
                    None => Value::null(),
                }
            }
            ("java.util.Map", "put", 2) => {
                let key = map_key(&cx.arg(1));
                let this = cx.this.clone();
                self.set_obj_field(&this, &key, cx.arg(2));
                if let Kind::Obj(id) = this.kind {
                    // values() iterates the mapped values in insertion order
                    let o = &mut self.objects[id];
                    let next = o.elems.keys().next_back().map_or(0, |k| k + 1);
                    o.elems.insert(next, cx.arg(2));
                }
                Value::null()
            }
            ("java.util.Map", "get", 1) => self.obj_field(&cx.this, &map_key(&cx.arg(1))).unwrap_or_else(Value::null),

            ("android.content.Intent", "putExtra", 2) | ("android.os.Bundle", "putString", 2) => {
                let this = cx.this.clone();
                let key = format!("extra:{}", cx.arg(1).display());
                self.set_obj_field(&this, &key, cx.arg(2));
                this
            }
            ("android.content.Intent", "putExtras", 1) => {
                let this = cx.this.clone();
                if let (Kind::Obj(dst), Kind::Obj(src)) = (this.kind.clone(), cx.arg(1).kind) {
                    let extras: Vec<(String, Value)> = self.objects[src]
                        .fields
                        .iter()
                        .filter(|(k, _)| k.starts_with("extra:"))
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect();
                    self.objects[dst].fields.extend(extras);
                }
                this
            }
            ("android.content.Intent", "getStringExtra" | "getCharSequenceExtra", 1) | ("android.os.Bundle", "getString", 1) => {
                let key = cx.arg(1).display();
                match self.obj_field(&cx.this, &format!("extra:{key}")) {
                    Some(v) if v.text.is_some() => v,
                    Some(v) => {
                        let s = v.display();
                        Value {
                            text: Some(token_span(Placeholder::Intent, s)),
                            ..v
                        }
                    }
                    None => {
                        let s = self.val.extras.get(&key).cloned().unwrap_or_else(|| self.val.intent_text.clone());
                        Value::string(token_span(Placeholder::Intent, s))
                    }
                }
            }
            ("android.content.Intent", "getIntExtra" | "getLongExtra" | "getDoubleExtra", 2) => {
                match self.obj_field(&cx.this, &format!("extra:{}", cx.arg(1).display())) {
                    Some(v) => Value { text: None, ..v },
                    None => Value {
                        labels: Default::default(),
                        text: None,
                        ..cx.arg(2)
                    },
                }
            }
            ("android.content.Intent", "getExtras", 0) => cx.this.clone(),

            ("java.util.UUID", "toString", 0) => cx.this.to_string_value(),
            ("java.util.Date", "<init>", 0) => {
                let ts = self.val.timestamp;
                cx.set_base(Default::default(), Some(token_span(Placeholder::Timestamp, ts.to_string())));
                Value::null()
            }
            ("java.util.Date", "<init>", 1) => {
                let a = cx.arg(1);
                cx.set_base(a.labels, a.text);
                Value::null()
            }
            ("java.text.DateFormat" | "java.text.SimpleDateFormat", "format", 1) => cx.arg(1).to_string_value(),

            ("android.database.sqlite.SQLiteOpenHelper", "<init>", 4 | 5) => {
                let this = cx.this.clone();
                self.set_obj_field(&this, "$dbname", cx.arg(2));
                Value::null()
            }
            ("android.database.sqlite.SQLiteOpenHelper", "getWritableDatabase" | "getReadableDatabase", 0) => {
                let name = self.obj_field(&cx.this, "$dbname").unwrap_or_else(Value::null);
                self.path_value("android.database.sqlite.SQLiteDatabase", self.pkg_dir("databases/"), &[&name], "")
            }
            ("android.content.ContentValues", "put", 2) => {
                let this = cx.this.clone();
                self.push_elem(&this, cx.arg(2));
                Value::null()
            }
            ("android.content.SharedPreferences", "edit", 0) => Value {
                kind: Kind::Ext(EDITOR.into()),
                ..cx.this.clone()
            },
            (EDITOR, n, 2) if n.starts_with("put") => cx.this.clone(),
            ("java.lang.Thread", "<init>", 1 | 2) => {
                let this = cx.this.clone();
                self.set_obj_field(&this, "$target", cx.arg(1));
                Value::null()
            }
            _ => return None,
        };
        Some(r)
    }

    /// Class whose `getLocalClassName` an Activity call observes: the
    /// receiver object when it is a component, else the calling frame.
    fn context_class(&self, cx: &Ctx) -> String {
        match self.class_of(&cx.this) {
            Some(c) if self.program.class(&c).is_some_and(|d| d.kind.is_context()) => c,
            _ => cx.frame.recv_class.clone(),
        }
    }
}

fn subdir(prefix: Text, child: &Value) -> Value {
    let mut v = Value::ext("java.io.File", prefix);
    v.labels = child.labels.clone();
    match (&child.kind, &child.text) {
        (Kind::Null, _) => v,
        (_, Some(t)) if super::concrete(t).is_empty() => v,
        (_, Some(t)) => {
            let text = concat_text(&v.text, &Some(t.clone()));
            v.text = concat_text(&text, &Some(lit("/")));
            v
        }
        (_, None) => Value { text: None, ..v },
    }
}

/// `new File(parent, child)`: exactly one separator between the two.
fn file_join(parent: &Text, child: &Text) -> Text {
    let p = super::concrete(parent);
    let c = super::concrete(child);
    let mut out = parent.clone();
    match (p.ends_with('/'), c.starts_with('/')) {
        (true, true) => {
            let mut rest = child.clone();
            if let Some(first) = rest.iter_mut().find(|s| !s.text.is_empty()) {
                first.text.remove(0);
            }
            out.extend(rest);
        }
        (false, false) => {
            out.extend(lit("/"));
            out.extend(child.iter().cloned());
        }
        _ => out.extend(child.iter().cloned()),
    }
    out
}

fn map_key(k: &Value) -> String {
    format!("key:{}", k.display())
}
