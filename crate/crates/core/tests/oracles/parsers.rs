//! Decoders must reproduce exactly what the independent encoders wrote.

use droidsift::axml::{parse_axml, TypedValue, XmlElement};
use droidsift::dex::{parse_dex, Instruction, MethodBody, Payload, Reference};
use droidsift_testkit::axml::{self, Element, Value};
use droidsift_testkit::dex::{self, CodeSym, InsnSym, PayloadSym, RefSym, Symbols};

const NS: &str = "http://schemas.android.com/apk/res/android";

pub fn axml_corpus() -> Vec<String> {
    let docs = [
        r#"<manifest xmlns:android="NS" package="com.a"/>"#.to_string(),
        r#"<manifest xmlns:android="NS" package="com.b" android:versionCode="7" android:versionName="1.2.3">
  <uses-permission android:name="android.permission.INTERNET"/>
  <application android:allowBackup="true" android:debuggable="false" android:label="B">
    <activity android:name=".Main" android:exported="true" android:launchMode="singleTask"/>
  </application>
</manifest>"#
            .to_string(),
        r#"<LinearLayout xmlns:android="NS" android:orientation="vertical">
  <EditText android:id="@+id/user_name" android:hint="Name"/>
  <EditText android:id="@+id/password" android:inputType="textPassword"/>
  <Button android:id="@id/submit" android:text="@string/submit"/>
</LinearLayout>"#
            .to_string(),
        r#"<manifest xmlns:android="NS" package="com.d">
  <application android:networkSecurityConfig="@xml/net" android:usesCleartextTraffic="false">
    <service android:name="com.d.Sync" android:permission="com.d.BIND"/>
    <receiver android:name=".Boot"><intent-filter android:priority="0x7fffffff"><action android:name="a.B"/></intent-filter></receiver>
    <provider android:name=".P" android:authorities="com.d.p" android:readPermission="r" android:writePermission="w"/>
  </application>
</manifest>"#
            .to_string(),
        r#"<a xmlns:android="NS"><b><c><d><e><f><g android:text="deep"/></f></e></d></c></b></a>"#.to_string(),
        r#"<root xmlns:android="NS" xmlns:app="http://schemas.android.com/apk/res-auto" app:layout="x" plain="y" android:minSdkVersion="-3"/>"#.to_string(),
        r#"<manifest xmlns:android="NS" package="com.unicode"><application android:label="Ünïcödé ✓ 日本語 😀"/></manifest>"#.to_string(),
        format!(
            r#"<list xmlns:android="NS">{}</list>"#,
            (0..60).map(|i| format!(r#"<item android:name="n{i}" android:text="t{}"/>"#, i % 7)).collect::<String>()
        ),
        format!(r#"<x xmlns:android="NS" android:text="{}" android:hint=""/>"#, "long".repeat(60)),
        r#"<manifest xmlns:android="NS" package="com.j">
  <application>
    <activity android:name=".A" android:launchMode="standard"/>
    <activity android:name=".B" android:launchMode="singleTop"/>
    <activity android:name=".C" android:launchMode="singleInstance" android:theme="@style/T"/>
  </application>
</manifest>"#
            .to_string(),
    ];
    docs.into_iter().map(|d| d.replace("\"NS\"", &format!("\"{NS}\""))).collect()
}

fn typed(v: &Value) -> TypedValue {
    match v {
        Value::String(s) => TypedValue::String(s.clone()),
        Value::Reference(r) => TypedValue::Reference(*r),
        Value::IntDec(i) => TypedValue::IntDec(*i),
        Value::IntHex(h) => TypedValue::IntHex(*h),
        Value::Boolean(b) => TypedValue::Boolean(*b),
    }
}

fn assert_tree(expected: &Element, got: &XmlElement, path: &str) {
    let here = format!("{path}/{}", expected.name);
    assert_eq!(got.name, expected.name, "{here}");
    assert_eq!(got.namespace, expected.namespace, "{here}");
    assert_eq!(got.attributes.len(), expected.attributes.len(), "{here} attribute count");
    for (e, g) in expected.attributes.iter().zip(&got.attributes) {
        let at = format!("{here}@{}", e.name);
        assert_eq!(g.name, e.name, "{at}");
        assert_eq!(g.namespace, e.namespace, "{at}");
        assert_eq!(g.resource_id, e.resource_id, "{at}");
        assert_eq!(g.raw, e.raw, "{at}");
        assert_eq!(g.value, typed(&e.value), "{at}");
    }
    assert_eq!(got.children.len(), expected.children.len(), "{here} child count");
    for (e, g) in expected.children.iter().zip(&got.children) {
        assert_tree(e, g, &here);
    }
}

/// Encodes, decodes and compares every AXML document in both string pool
/// encodings. Returns the number of fixtures checked.
pub fn check_axml() -> usize {
    let mut n = 0;
    for xml in axml_corpus() {
        let expected = axml::expected_tree(&xml).unwrap();
        for utf8 in [false, true] {
            let bin = axml::encode(&xml, axml::Options { utf8 }).unwrap();
            let doc = parse_axml(&bin).unwrap_or_else(|e| panic!("{e}: {xml}"));
            assert_tree(&expected, &doc.root, "");
            n += 1;
        }
    }
    n
}

pub fn dex_corpus() -> Vec<String> {
    vec![
        // empty class with defaults
        ".class public LA;\n".into(),
        // fields, interfaces, source file
        r#".class public final Lcom/x/Model;
.super Ljava/lang/Object;
.implements Ljava/io/Serializable;
.implements Ljava/lang/Comparable;
.source "Model.java"
.field private static final TAG:Ljava/lang/String;
.field public count:I
.field protected data:[B
.field private next:Lcom/x/Model;
"#
        .into(),
        // arithmetic and literals of every width
        r#".class LArith;
.method static calc(IJ)J
    .registers 10
    const/4 v0, -8
    const/16 v1, 32767
    const v2, -2147483648
    const/high16 v3, 0x7f010000
    const-wide/16 v4, -1
    const-wide/32 v4, 100000
    const-wide v4, 0x123456789abcdef0
    const-wide/high16 v4, 0x4000000000000000
    add-int v0, v1, v2
    sub-int/2addr v0, v1
    mul-int/lit8 v0, v0, 3
    div-int/lit16 v0, v0, 1000
    rem-int/lit8 v0, v0, -7
    shl-int/lit8 v0, v0, 2
    add-long v4, v4, v8
    neg-int v0, v0
    int-to-long v6, v0
    long-to-int v0, v6
    xor-long/2addr v4, v6
    return-wide v4
.end method
"#
        .into(),
        // branches and loops
        r#".class LLoop;
.method static sum(I)I
    .registers 4
    const/4 v0, 0
    const/4 v1, 0
    :top
    if-ge v1, p0, :done
    add-int/2addr v0, v1
    add-int/lit8 v1, v1, 1
    if-eqz v0, :top
    if-nez v0, :skip
    goto/16 :top
    :skip
    goto :top
    :done
    if-lt v0, v1, :far
    return v0
    :far
    goto/32 :done
.end method
"#
        .into(),
        // packed and sparse switches
        r#".class LSwitch;
.method static pick(I)I
    .registers 3
    packed-switch p0, :table
    const/4 v0, 0
    return v0
    :a
    const/4 v0, 1
    return v0
    :b
    const/4 v0, 2
    return v0
    :c
    sparse-switch p0, :sparse
    const/4 v0, 3
    return v0
    :table
    .packed-switch -1
        :a
        :b
        :c
    .end packed-switch
    :sparse
    .sparse-switch
        -100 -> :a
        7 -> :b
        65536 -> :c
    .end sparse-switch
.end method
"#
        .into(),
        // arrays and fill-array-data
        r#".class LArrays;
.method static make()[I
    .registers 4
    const/4 v0, 5
    new-array v1, v0, [I
    fill-array-data v1, :data
    aget v2, v1, v0
    aput v2, v1, v0
    array-length v3, v1
    filled-new-array {v0, v2, v3}, [I
    move-result-object v1
    return-object v1
    :data
    .array-data 4
        1 2 -3 4 0x7fffffff
    .end array-data
.end method

.method static bytes()[J
    .registers 3
    const/4 v0, 2
    new-array v1, v0, [J
    fill-array-data v1, :w
    return-object v1
    :w
    .array-data 8
        1 -1
    .end array-data
.end method
"#
        .into(),
        // try/catch
        r#".class LTry;
.method static risky()V
    .registers 3
    :start
    invoke-static {}, LTry;->boom()V
    const-string v0, "after"
    :end
    return-void
    :handler
    move-exception v1
    throw v1
    :all
    move-exception v2
    return-void
    .catch Ljava/io/IOException; {:start .. :end} :handler
    .catchall {:start .. :end} :all
.end method
.method static boom()V
    .registers 0
    return-void
.end method
"#
        .into(),
        // invocations of every kind, including ranges
        r#".class public LCalls;
.super Landroid/app/Activity;
.implements Landroid/view/View$OnClickListener;
.method public constructor <init>()V
    .registers 1
    invoke-direct {p0}, Landroid/app/Activity;-><init>()V
    return-void
.end method
.method public onClick(Landroid/view/View;)V
    .registers 9
    invoke-virtual {p0}, LCalls;->finish()V
    invoke-super {p0}, Landroid/app/Activity;->onResume()V
    invoke-interface {p1}, Ljava/lang/Runnable;->run()V
    invoke-static {}, LCalls;->helper()I
    move-result v0
    invoke-virtual/range {v2 .. v7}, Landroid/telephony/SmsManager;->sendTextMessage(Ljava/lang/String;Ljava/lang/String;Ljava/lang/String;Landroid/app/PendingIntent;Landroid/app/PendingIntent;)V
    invoke-static/range {v0 .. v0}, LCalls;->take(I)V
    return-void
.end method
.method private static helper()I
    .registers 1
    const/4 v0, 1
    return v0
.end method
.method private static take(I)V
    .registers 1
    return-void
.end method
"#
        .into(),
        // field access, type ops, strings with escapes and non-ASCII text
        r#".class LFields;
.field static s:Ljava/lang/String;
.field w:J
.field b:Z
.method f()V
    .registers 6
    const-string v0, "tab\tquote\" backslash\\ newline\n"
    const-string v1, "Grüße é 日本 "
    const-string/jumbo v2, "jumbo"
    sput-object v0, LFields;->s:Ljava/lang/String;
    sget-object v0, LFields;->s:Ljava/lang/String;
    iget-wide v2, p0, LFields;->w:J
    iput-wide v2, p0, LFields;->w:J
    iget-boolean v4, p0, LFields;->b:Z
    check-cast v0, Ljava/lang/CharSequence;
    instance-of v4, v0, Ljava/lang/String;
    const-class v1, LFields;
    new-instance v1, Ljava/lang/StringBuilder;
    monitor-enter p0
    monitor-exit p0
    cmp-long v4, v2, v2
    return-void
.end method
"#
        .into(),
        // several classes with a hierarchy declared out of order
        r#".class public LZ;
.super LY;
.method public run()V
    .registers 1
    invoke-super {p0}, LY;->run()V
    return-void
.end method
.class public LY;
.super LX;
.implements Ljava/lang/Runnable;
.method public run()V
    .registers 1
    return-void
.end method
.class public abstract LX;
.method public abstract run()V
.end method
.method public native id()I
.end method
.method static move(JD)V
    .registers 300
    move/from16 v0, v255
    move/16 v256, v1
    move-wide/from16 v2, v298
    move-object/16 v299, v0
    return-void
.end method
"#
        .into(),
    ]
}

fn ref_sym(r: &Reference) -> RefSym {
    match r {
        Reference::String(s) => RefSym::String(s.clone()),
        Reference::Type(t) => RefSym::Type(t.clone()),
        Reference::Field(f) => RefSym::Field(f.to_string()),
        Reference::Method(m) => RefSym::Method(m.to_string()),
        other => panic!("unexpected reference {other:?}"),
    }
}

fn insn_sym(i: &Instruction) -> InsnSym {
    InsnSym {
        offset: i.offset,
        mnemonic: i.opcode.mnemonic().to_string(),
        opcode: i.opcode.0,
        registers: i.registers.clone(),
        literal: i.literal,
        target: i.target,
        reference: i.reference.as_ref().map(ref_sym),
        payload: i.payload.as_ref().map(|p| match p {
            Payload::PackedSwitch { first_key, targets } => PayloadSym::PackedSwitch {
                first_key: *first_key,
                targets: targets.clone(),
            },
            Payload::SparseSwitch { keys, targets } => PayloadSym::SparseSwitch {
                keys: keys.clone(),
                targets: targets.clone(),
            },
            Payload::FillArrayData {
                element_width,
                element_count,
            } => PayloadSym::FillArrayData {
                element_width: *element_width,
                element_count: *element_count,
            },
        }),
        width: i.width,
    }
}

fn code_sym(b: &MethodBody) -> CodeSym {
    CodeSym {
        registers: b.registers_size,
        ins: b.ins_size,
        outs: b.outs_size,
        insns: b.instructions.iter().map(insn_sym).collect(),
        tries: b
            .tries
            .iter()
            .map(|t| dex::TrySym {
                start: t.start,
                end: t.end,
                handlers: t.handlers.iter().map(|h| (h.exception_type.clone(), h.target)).collect(),
            })
            .collect(),
    }
}

pub fn assert_dex(expected: &Symbols, bytes: &[u8], label: &str) {
    let d = parse_dex(bytes, "classes.dex").unwrap_or_else(|e| panic!("{label}: {e}"));
    assert_eq!(d.strings, expected.strings, "{label} strings");
    assert_eq!(d.types, expected.types, "{label} types");
    let protos: Vec<(String, String, Vec<String>)> =
        d.protos.iter().map(|p| (p.shorty.clone(), p.return_type.clone(), p.parameters.clone())).collect();
    let want: Vec<(String, String, Vec<String>)> = expected
        .protos
        .iter()
        .map(|p| (p.shorty.clone(), p.return_type.clone(), p.parameters.clone()))
        .collect();
    assert_eq!(protos, want, "{label} protos");
    let fields: Vec<(String, String, String)> =
        d.fields.iter().map(|f| (f.class.clone(), f.name.clone(), f.field_type.clone())).collect();
    assert_eq!(fields, expected.fields, "{label} fields");
    let methods: Vec<(String, String, String)> =
        d.methods.iter().map(|m| (m.class.clone(), m.name.clone(), m.proto.descriptor())).collect();
    assert_eq!(methods, expected.methods, "{label} methods");

    assert_eq!(d.classes.len(), expected.classes.len(), "{label} class count");
    for (c, e) in d.classes.iter().zip(&expected.classes) {
        let at = format!("{label} {}", e.descriptor);
        assert_eq!(c.descriptor, e.descriptor, "{at}");
        assert_eq!(c.access_flags, e.access, "{at} access");
        assert_eq!(c.superclass, e.superclass, "{at} super");
        assert_eq!(c.interfaces, e.interfaces, "{at} interfaces");
        assert_eq!(c.source_file, e.source_file, "{at} source");
        for (got, want) in [(&c.static_fields, &e.static_fields), (&c.instance_fields, &e.instance_fields)] {
            let got: Vec<(String, String, String, u32)> = got
                .iter()
                .map(|f| {
                    let r = d.field_ref(f);
                    (r.class.clone(), r.name.clone(), r.field_type.clone(), f.access_flags)
                })
                .collect();
            let want: Vec<(String, String, String, u32)> = want
                .iter()
                .map(|f| (f.class.clone(), f.name.clone(), f.field_type.clone(), f.access))
                .collect();
            assert_eq!(got, want, "{at} fields");
        }
        for (got, want) in [(&c.direct_methods, &e.direct_methods), (&c.virtual_methods, &e.virtual_methods)] {
            assert_eq!(got.len(), want.len(), "{at} method count");
            for (m, w) in got.iter().zip(want) {
                let r = d.method_ref(m);
                let mat = format!("{at}->{}", w.name);
                assert_eq!((&r.class, &r.name, r.proto.descriptor()), (&w.class, &w.name, w.descriptor.clone()), "{mat}");
                assert_eq!(m.access_flags, w.access, "{mat} access");
                match &w.code {
                    None => assert!(!m.has_code(), "{mat} should have no code"),
                    Some(code) => {
                        let body = d.decode_encoded(m).unwrap_or_else(|e| panic!("{mat}: {e}"));
                        let got = code_sym(&body);
                        assert_eq!(got.registers, code.registers, "{mat} registers");
                        assert_eq!(got.ins, code.ins, "{mat} ins");
                        assert_eq!(got.outs, code.outs, "{mat} outs");
                        assert_eq!(got.tries, code.tries, "{mat} tries");
                        assert_eq!(got.insns.len(), code.insns.len(), "{mat} instruction count");
                        for (g, w) in got.insns.iter().zip(&code.insns) {
                            assert_eq!(g, w, "{mat} @{:#x}", w.offset);
                        }
                    }
                }
            }
        }
    }
}

/// Assembles, decodes and compares every DEX program. Returns the number of
/// fixtures checked.
pub fn check_dex() -> usize {
    let corpus = dex_corpus();
    for (i, src) in corpus.iter().enumerate() {
        let a = dex::assemble(src).unwrap_or_else(|e| panic!("program {i}: {e}"));
        assert_dex(&a.symbols, &a.bytes, &format!("program {i}"));
    }
    corpus.len()
}

