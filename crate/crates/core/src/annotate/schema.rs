//! Validator for the subset of XML Schema used by the bundled VOC schema.
//!
//! Supported: global `element`, named and anonymous `complexType` holding a
//! `sequence` of `element` and `any` particles with `minOccurs`/`maxOccurs`,
//! `attribute` declarations, named `simpleType` restrictions with
//! `enumeration` facets, and the builtin types `string`, `integer`, `int`,
//! `nonNegativeInteger`, `positiveInteger`, `decimal`, `double` and
//! `boolean`. Any other schema construct is reported as unsupported rather
//! than ignored. The schema must not declare a target namespace.

use std::collections::HashMap;

use roxmltree::{Document, Node};

use crate::error::{Error, Result};

const XS: &str = "http://www.w3.org/2001/XMLSchema";

#[derive(Debug, Clone)]
enum Builtin {
    String,
    Integer,
    NonNegativeInteger,
    PositiveInteger,
    Decimal,
    Boolean,
}

impl Builtin {
    fn parse(local: &str) -> Option<Builtin> {
        Some(match local {
            "string" => Builtin::String,
            "integer" | "int" | "long" => Builtin::Integer,
            "nonNegativeInteger" => Builtin::NonNegativeInteger,
            "positiveInteger" => Builtin::PositiveInteger,
            "decimal" | "double" | "float" => Builtin::Decimal,
            "boolean" => Builtin::Boolean,
            _ => return None,
        })
    }

    fn check(&self, text: &str) -> bool {
        let t = text.trim();
        match self {
            Builtin::String => true,
            Builtin::Integer => t.parse::<i64>().is_ok(),
            Builtin::NonNegativeInteger => t.parse::<u64>().is_ok(),
            Builtin::PositiveInteger => t.parse::<u64>().is_ok_and(|v| v > 0),
            Builtin::Decimal => !t.is_empty() && t.parse::<f64>().is_ok_and(f64::is_finite),
            Builtin::Boolean => matches!(t, "true" | "false" | "0" | "1"),
        }
    }
}

#[derive(Debug, Clone)]
struct SimpleType {
    base: Builtin,
    enumeration: Vec<String>,
}

impl SimpleType {
    fn check(&self, text: &str) -> bool {
        self.base.check(text) && (self.enumeration.is_empty() || self.enumeration.iter().any(|e| e == text.trim()))
    }
}

#[derive(Debug, Clone)]
enum TypeRef {
    Simple(SimpleType),
    Named(String),
    Complex(ComplexType),
}

#[derive(Debug, Clone)]
struct ElementDecl {
    name: String,
    ty: TypeRef,
    min: usize,
    max: Option<usize>,
}

#[derive(Debug, Clone)]
enum Particle {
    Element(ElementDecl),
    /// `##other` when true, `##any` otherwise.
    Any { other: bool, min: usize, max: Option<usize> },
}

#[derive(Debug, Clone)]
struct AttrDecl {
    name: String,
    ty: SimpleType,
    required: bool,
}

#[derive(Debug, Clone, Default)]
struct ComplexType {
    particles: Vec<Particle>,
    attributes: Vec<AttrDecl>,
}

#[derive(Debug, Default)]
struct Schema {
    elements: HashMap<String, ElementDecl>,
    complex: HashMap<String, ComplexType>,
    simple: HashMap<String, SimpleType>,
}

fn unsupported(n: Node) -> Error {
    Error::format(format!("schema construct <{}> is not supported", n.tag_name().name()))
}

fn xs_children<'a, 'i>(n: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    n.children().filter(|c| c.is_element())
}

fn occurs(n: Node) -> Result<(usize, Option<usize>)> {
    let min = n
        .attribute("minOccurs")
        .map(|s| s.parse().map_err(|_| Error::format(format!("bad minOccurs {s:?}"))))
        .transpose()?
        .unwrap_or(1);
    let max = match n.attribute("maxOccurs") {
        None => Some(1),
        Some("unbounded") => None,
        Some(s) => Some(s.parse().map_err(|_| Error::format(format!("bad maxOccurs {s:?}")))?),
    };
    Ok((min, max))
}

fn local_type(qname: &str) -> &str {
    qname.rsplit(':').next().unwrap_or(qname)
}

impl Schema {
    fn parse(text: &str) -> Result<Schema> {
        let doc = Document::parse(text).map_err(|e| Error::format(format!("schema XML: {e}")))?;
        let root = doc.root_element();
        if !root.has_tag_name((XS, "schema")) {
            return Err(Error::format("schema root must be xs:schema"));
        }
        if root.attribute("targetNamespace").is_some() {
            return Err(Error::format("schemas with a target namespace are not supported"));
        }
        let mut s = Schema::default();
        // Simple types first so later declarations can refer to them.
        for n in xs_children(root).filter(|n| n.has_tag_name((XS, "simpleType"))) {
            let name = n.attribute("name").ok_or_else(|| Error::format("top-level simpleType needs a name"))?;
            let st = Self::simple_type(n)?;
            s.simple.insert(name.to_owned(), st);
        }
        for n in xs_children(root) {
            match n.tag_name().name() {
                "simpleType" | "annotation" => {}
                "complexType" => {
                    let name = n.attribute("name").ok_or_else(|| Error::format("top-level complexType needs a name"))?;
                    let ct = s.complex_type(n)?;
                    s.complex.insert(name.to_owned(), ct);
                }
                "element" => {
                    let e = s.element(n)?;
                    s.elements.insert(e.name.clone(), e);
                }
                _ => return Err(unsupported(n)),
            }
        }
        Ok(s)
    }

    fn simple_type(n: Node) -> Result<SimpleType> {
        let r = xs_children(n)
            .find(|c| c.has_tag_name((XS, "restriction")))
            .ok_or_else(|| unsupported(n))?;
        let base = r.attribute("base").ok_or_else(|| Error::format("restriction needs a base"))?;
        let base = Builtin::parse(local_type(base)).ok_or_else(|| Error::format(format!("unknown base type {base}")))?;
        let mut enumeration = Vec::new();
        for f in xs_children(r) {
            if !f.has_tag_name((XS, "enumeration")) {
                return Err(unsupported(f));
            }
            enumeration.push(f.attribute("value").unwrap_or_default().to_owned());
        }
        Ok(SimpleType { base, enumeration })
    }

    fn simple_ref(&self, qname: &str) -> Option<SimpleType> {
        let local = local_type(qname);
        if qname.starts_with("xs:") {
            return Builtin::parse(local).map(|base| SimpleType {
                base,
                enumeration: vec![],
            });
        }
        self.simple.get(local).cloned()
    }

    fn complex_type(&self, n: Node) -> Result<ComplexType> {
        let mut ct = ComplexType::default();
        for c in xs_children(n) {
            match c.tag_name().name() {
                "sequence" => {
                    for p in xs_children(c) {
                        match p.tag_name().name() {
                            "element" => ct.particles.push(Particle::Element(self.element(p)?)),
                            "any" => {
                                let (min, max) = occurs(p)?;
                                let other = match p.attribute("namespace").unwrap_or("##any") {
                                    "##other" => true,
                                    "##any" => false,
                                    ns => return Err(Error::format(format!("xs:any namespace {ns} is not supported"))),
                                };
                                ct.particles.push(Particle::Any { other, min, max });
                            }
                            _ => return Err(unsupported(p)),
                        }
                    }
                }
                "attribute" => {
                    let name = c.attribute("name").ok_or_else(|| Error::format("attribute needs a name"))?;
                    let ty = c.attribute("type").unwrap_or("xs:string");
                    let ty = self
                        .simple_ref(ty)
                        .ok_or_else(|| Error::format(format!("unknown attribute type {ty}")))?;
                    ct.attributes.push(AttrDecl {
                        name: name.to_owned(),
                        ty,
                        required: c.attribute("use") == Some("required"),
                    });
                }
                "annotation" => {}
                _ => return Err(unsupported(c)),
            }
        }
        Ok(ct)
    }

    fn element(&self, n: Node) -> Result<ElementDecl> {
        let name = n.attribute("name").ok_or_else(|| Error::format("element needs a name"))?;
        let (min, max) = occurs(n)?;
        let ty = if let Some(t) = n.attribute("type") {
            match self.simple_ref(t) {
                Some(st) => TypeRef::Simple(st),
                None if !t.starts_with("xs:") => TypeRef::Named(local_type(t).to_owned()),
                None => return Err(Error::format(format!("unknown builtin type {t}"))),
            }
        } else if let Some(ct) = xs_children(n).find(|c| c.has_tag_name((XS, "complexType"))) {
            TypeRef::Complex(self.complex_type(ct)?)
        } else {
            TypeRef::Simple(SimpleType {
                base: Builtin::String,
                enumeration: vec![],
            })
        };
        Ok(ElementDecl {
            name: name.to_owned(),
            ty,
            min,
            max,
        })
    }

    fn check(&self, node: Node, decl: &ElementDecl, path: &str) -> Result<()> {
        let fail = |reason: String| Error::validation(format!("XML {path}"), reason);
        let ct = match &decl.ty {
            TypeRef::Simple(st) => {
                if node.children().any(|c| c.is_element()) {
                    return Err(fail("simple-typed element has child elements".into()));
                }
                let text: String = node.children().filter_map(|c| c.text()).collect();
                if !st.check(&text) {
                    return Err(fail(format!("value {:?} is not a valid {:?}", text.trim(), st.base)));
                }
                if node.attributes().len() > 0 {
                    return Err(fail("unexpected attribute".into()));
                }
                return Ok(());
            }
            TypeRef::Named(name) => self
                .complex
                .get(name)
                .ok_or_else(|| fail(format!("schema has no complexType {name}")))?,
            TypeRef::Complex(ct) => ct,
        };

        for a in node.attributes() {
            if a.namespace().is_some() {
                continue;
            }
            let d = ct
                .attributes
                .iter()
                .find(|d| d.name == a.name())
                .ok_or_else(|| fail(format!("undeclared attribute {}", a.name())))?;
            if !d.ty.check(a.value()) {
                return Err(fail(format!("attribute {} has invalid value {:?}", a.name(), a.value())));
            }
        }
        for d in ct.attributes.iter().filter(|d| d.required) {
            if node.attribute(d.name.as_str()).is_none() {
                return Err(fail(format!("missing required attribute {}", d.name)));
            }
        }
        if node.children().any(|c| c.is_text() && !c.text().unwrap_or("").trim().is_empty()) {
            return Err(fail("unexpected text content".into()));
        }

        let children: Vec<Node> = node.children().filter(|c| c.is_element()).collect();
        let mut i = 0;
        for p in &ct.particles {
            let (min, max) = match p {
                Particle::Element(e) => (e.min, e.max),
                Particle::Any { min, max, .. } => (*min, *max),
            };
            let mut n = 0;
            while i < children.len() && max.is_none_or(|m| n < m) {
                let c = children[i];
                let ok = match p {
                    Particle::Element(e) => c.tag_name().namespace().is_none() && c.tag_name().name() == e.name,
                    Particle::Any { other, .. } => !*other || c.tag_name().namespace().is_some(),
                };
                if !ok {
                    break;
                }
                if let Particle::Element(e) = p {
                    self.check(c, e, &format!("{path}/{}[{n}]", e.name))?;
                }
                i += 1;
                n += 1;
            }
            if n < min {
                let what = match p {
                    Particle::Element(e) => format!("<{}>", e.name),
                    Particle::Any { .. } => "extension element".into(),
                };
                return Err(fail(format!("expected at least {min} {what}, found {n}")));
            }
        }
        if let Some(c) = children.get(i) {
            return Err(fail(format!("unexpected element <{}>", c.tag_name().name())));
        }
        Ok(())
    }
}

/// Validates an XML document against a schema in the supported subset.
pub fn validate_xml(xml: &str, schema: &str) -> Result<()> {
    let schema = Schema::parse(schema)?;
    let doc = Document::parse(xml).map_err(|e| Error::format(format!("XML: {e}")))?;
    let root = doc.root_element();
    let name = root.tag_name().name();
    let decl = schema
        .elements
        .get(name)
        .filter(|_| root.tag_name().namespace().is_none())
        .ok_or_else(|| Error::validation("XML document", format!("root element <{name}> is not declared")))?;
    schema.check(root, decl, &format!("/{name}"))
}
