from __future__ import annotations

import pytest

from scpilot.errors import RegistrationError
from scpilot.toolreg import (
    ToolDescriptor,
    ToolRegistry,
    build_registry,
    parse_tool_file,
)


def _descriptor(name="harmony_like", kinds=("batch_correction",), doc="Corrects batches.\n"):
    return ToolDescriptor(
        name=name, summary="summary", task_kinds=frozenset(kinds), doc=doc, invocation_hint="call()"
    )


def test_register_and_list():
    reg = ToolRegistry()
    reg.register(_descriptor())
    assert "harmony_like" in reg
    assert reg.list_for("batch_correction").names() == ["harmony_like"]


def test_duplicate_registration_rejected():
    reg = ToolRegistry()
    reg.register(_descriptor())
    with pytest.raises(RegistrationError):
        reg.register(_descriptor())


def test_empty_doc_rejected():
    with pytest.raises(RegistrationError):
        _descriptor(doc="   \n")


def test_empty_kinds_rejected():
    with pytest.raises(RegistrationError):
        _descriptor(kinds=())


def test_frozen_registry_rejects_registration():
    reg = ToolRegistry()
    reg.register(_descriptor())
    reg.freeze()
    with pytest.raises(RegistrationError):
        reg.register(_descriptor(name="other_tool", kinds=("other",)))


def test_default_catalog_matches_known_methods():
    reg = build_registry()
    assert set(reg.list_for("batch_correction").names()) == {
        "scvi_like",
        "harmony_like",
        "combat_like",
        "scanorama_like",
        "liger_like",
    }
    trajectory = set(reg.list_for("trajectory_inference").names())
    assert {"slingshot_like", "paga_like", "scorpius_like"} <= trajectory
    annotators = set(reg.list_for("cell_annotation").names())
    assert {
        "cellmarker_like",
        "act_like",
        "celltypist_like",
        "scsa_like",
        "sctype_like",
        "llm_annotator_like",
    } <= annotators


def test_list_for_unknown_kind_returns_flagged_catalog():
    reg = build_registry()
    listing = reg.list_for("other")
    assert listing.complete_catalog
    assert len(listing.entries) == len(reg)


def test_listing_is_subset_of_registry():
    reg = build_registry()
    for kind in ("preprocess", "batch_correction", "cell_annotation", "visualization"):
        assert set(reg.list_for(kind).names()) <= set(reg.names())


def test_docs_lookup_and_missing_report():
    reg = build_registry()
    bundle = reg.docs(["harmony_like", "nonexistent_tool"])
    assert "harmony_like" in bundle.docs
    assert "harmony" in bundle.docs["harmony_like"].lower()
    assert bundle.missing == ["nonexistent_tool"]


def test_docs_empty_request():
    reg = build_registry()
    bundle = reg.docs([])
    assert bundle.docs == {}
    assert bundle.missing == []


def test_doc_truncation_recorded():
    reg = ToolRegistry(doc_budget=64)
    reg.register(_descriptor(doc="long doc " * 50))
    bundle = reg.docs(["harmony_like"])
    assert bundle.truncated == ["harmony_like"]
    assert len(bundle.docs["harmony_like"].encode("utf-8")) <= 64


def test_parse_tool_file_roundtrip():
    text = (
        "name: my_tool\n"
        "summary: does things\n"
        "kinds: preprocess, visualization\n"
        "hint: my_tool(adata)\n"
        "\n"
        "Full documentation body.\n"
    )
    desc = parse_tool_file(text)
    assert desc.name == "my_tool"
    assert desc.task_kinds == {"preprocess", "visualization"}
    assert desc.invocation_hint == "my_tool(adata)"
    assert "Full documentation body." in desc.doc


def test_parse_tool_file_requires_header_keys():
    with pytest.raises(RegistrationError):
        parse_tool_file("name: x\n\nbody\n")


def test_user_tools_dir_extends_catalog(tmp_path):
    (tmp_path / "custom_tool.md").write_text(
        "name: custom_tool\nsummary: mine\nkinds: other\n\nDocs here.\n", encoding="utf-8"
    )
    reg = build_registry(tools_dir=tmp_path)
    assert "custom_tool" in reg
