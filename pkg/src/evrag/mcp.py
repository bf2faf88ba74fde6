"""JSON-RPC 2.0 tool server over newline-delimited stdio.

Implements the Model Context Protocol's minimal tool surface
(initialize, tools/list, tools/call) so an agent can discover and call
the literature-search tool through a standard handshake. Protocol
errors use the reserved JSON-RPC codes; tool handler failures come back
as tool-level results with isError set, never as protocol errors.
"""
from __future__ import annotations

import json
import logging
import sys
from dataclasses import dataclass
from typing import Any, Callable

from .errors import ArgValidation, UnknownTool
from .pubmed import LitQuery, PubMedClient

log = logging.getLogger(__name__)

PROTOCOL_VERSION = "2024-11-05"
SERVER_NAME = "evrag-tools"
SERVER_VERSION = "0.1.0"

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603


@dataclass
class ToolDescriptor:
    name: str
    description: str
    input_schema: dict

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "inputSchema": self.input_schema,
        }


class ToolRegistry:
    def __init__(self):
        self._tools: dict[str, tuple[ToolDescriptor, Callable[[dict], dict]]] = {}

    def register(self, descriptor: ToolDescriptor, handler: Callable[[dict], dict]) -> None:
        if descriptor.name in self._tools:
            raise ValueError(f"tool already registered: {descriptor.name}")
        self._tools[descriptor.name] = (descriptor, handler)

    def descriptors(self) -> list[ToolDescriptor]:
        return [d for d, _ in self._tools.values()]

    def get(self, name: str) -> tuple[ToolDescriptor, Callable[[dict], dict]]:
        if name not in self._tools:
            raise UnknownTool(name)
        return self._tools[name]

    def __len__(self) -> int:
        return len(self._tools)


def _validate_args(schema: dict, args: Any) -> None:
    """Minimal JSON-schema check: object type, required keys, primitive types."""
    if not isinstance(args, dict):
        raise ArgValidation("arguments must be an object")
    for key in schema.get("required", []):
        if key not in args:
            raise ArgValidation(f"missing required argument: {key}")
    type_map = {"string": str, "integer": int, "number": (int, float), "boolean": bool}
    for key, spec in schema.get("properties", {}).items():
        if key in args and spec.get("type") in type_map:
            expected = type_map[spec["type"]]
            value = args[key]
            if spec.get("type") == "integer" and isinstance(value, bool):
                raise ArgValidation(f"argument {key} must be an integer")
            if not isinstance(value, expected):
                raise ArgValidation(f"argument {key} must be of type {spec['type']}")


def call_tool(name: str, args: Any, registry: ToolRegistry) -> dict:
    """Validates args and runs the handler; handler errors become isError results."""
    descriptor, handler = registry.get(name)
    _validate_args(descriptor.input_schema, args)
    try:
        result = handler(args)
    except Exception as exc:
        log.warning("tool %s failed: %s", name, exc)
        return {
            "content": [{"type": "text", "text": f"tool error: {exc}"}],
            "isError": True,
        }
    return result


def initialize(params: Any) -> dict:
    return {
        "protocolVersion": PROTOCOL_VERSION,
        "capabilities": {"tools": {}},
        "serverInfo": {"name": SERVER_NAME, "version": SERVER_VERSION},
    }


LITERATURE_SEARCH_SCHEMA = {
    "type": "object",
    "properties": {
        "term": {"type": "string", "description": "search terms"},
        "max_results": {"type": "integer", "description": "articles to return (default 3)"},
        "years_back": {"type": "integer", "description": "publication window in years (default 5)"},
    },
    "required": ["term"],
}


def make_literature_tool(client: PubMedClient) -> tuple[ToolDescriptor, Callable[[dict], dict]]:
    descriptor = ToolDescriptor(
        name="literature_search",
        description=(
            "Search peer-reviewed biomedical literature; returns recent, "
            "review-prioritized article records with abstracts."
        ),
        input_schema=LITERATURE_SEARCH_SCHEMA,
    )

    def handler(args: dict) -> dict:
        q = LitQuery(
            term=args["term"],
            max_results=int(args.get("max_results", 3)),
            years_back=int(args.get("years_back", 5)),
        )
        articles = client.lookup(q)
        summary = "\n".join(
            f"{a.title} ({a.year}) {a.url}" for a in articles
        ) or "no articles found"
        return {
            "content": [{"type": "text", "text": summary}],
            "structuredContent": {"articles": [a.to_dict() for a in articles]},
        }

    return descriptor, handler


def default_registry(client: PubMedClient | None = None) -> ToolRegistry:
    registry = ToolRegistry()
    descriptor, handler = make_literature_tool(client or PubMedClient())
    registry.register(descriptor, handler)
    return registry


def _error_response(id_value, code: int, message: str) -> dict:
    return {"jsonrpc": "2.0", "id": id_value, "error": {"code": code, "message": message}}


def _result_response(id_value, result) -> dict:
    return {"jsonrpc": "2.0", "id": id_value, "result": result}


def handle_request(req: Any, registry: ToolRegistry) -> dict | None:
    """Dispatches one request object; returns None for notifications."""
    if not isinstance(req, dict):
        return _error_response(None, INVALID_REQUEST, "request must be an object")
    id_present = "id" in req
    id_value = req.get("id")
    if not (id_value is None or isinstance(id_value, (str, int, float))):
        return _error_response(None, INVALID_REQUEST, "invalid id type")

    if req.get("jsonrpc") != "2.0" or not isinstance(req.get("method"), str):
        # an invalid object is not a notification even without an id
        return _error_response(id_value if id_present else None,
                               INVALID_REQUEST, "not a valid JSON-RPC 2.0 request")
    is_notification = not id_present

    method = req["method"]
    params = req.get("params")

    try:
        if method == "initialize":
            response = _result_response(id_value, initialize(params))
        elif method == "tools/list":
            response = _result_response(
                id_value, {"tools": [d.to_dict() for d in registry.descriptors()]}
            )
        elif method == "tools/call":
            if not isinstance(params, dict) or not isinstance(params.get("name"), str):
                raise ArgValidation("params must carry a tool name")
            result = call_tool(params["name"], params.get("arguments", {}), registry)
            response = _result_response(id_value, result)
        else:
            response = _error_response(id_value, METHOD_NOT_FOUND, f"method not found: {method}")
    except (UnknownTool, ArgValidation) as exc:
        response = _error_response(id_value, INVALID_PARAMS, str(exc))
    except Exception as exc:
        log.exception("internal error handling %s", method)
        response = _error_response(id_value, INTERNAL_ERROR, f"internal error: {exc}")

    return None if is_notification else response


def handle_line(line: str, registry: ToolRegistry) -> str | None:
    """Processes one wire line; returns the response line or None."""
    try:
        message = json.loads(line)
    except ValueError:
        return json.dumps(_error_response(None, PARSE_ERROR, "parse error"))

    if isinstance(message, list):
        if not message:
            return json.dumps(_error_response(None, INVALID_REQUEST, "empty batch"))
        responses = [r for r in (handle_request(m, registry) for m in message)
                     if r is not None]
        if not responses:
            return None  # batch of notifications
        return json.dumps(responses)

    response = handle_request(message, registry)
    return None if response is None else json.dumps(response)


def serve(registry: ToolRegistry, stdin=None, stdout=None) -> None:
    """Request loop: one JSON value per line in, one response line out.

    Runs until EOF; protocol errors never escape the loop.
    """
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    if len(registry) == 0:
        raise ValueError("refusing to serve an empty tool registry")
    for line in stdin:
        if not line.strip():
            out = json.dumps(_error_response(None, PARSE_ERROR, "parse error"))
        else:
            try:
                out = handle_line(line, registry)
            except Exception as exc:  # defensive: the loop must survive anything
                log.exception("unexpected server error")
                out = json.dumps(_error_response(None, INTERNAL_ERROR, str(exc)))
        if out is not None:
            try:
                stdout.write(out + "\n")
                stdout.flush()
            except OSError as exc:
                log.error("transport write failed, stopping: %s", exc)
                return
