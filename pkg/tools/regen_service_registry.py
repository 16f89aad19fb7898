#!/usr/bin/env python3
"""Regenerate src/ualab/service_ids.csv from an installed OPC UA stack.

The numeric ids are the DefaultBinary encoding NodeIds published in the
OPC Foundation NodeIds registry. Rather than trusting hand-typed literals,
this script reads them from a maintained stack (asyncua or opcua, whichever
is importable) and rewrites the fixture. Run it whenever the fixture needs
to be re-derived:

    pip install asyncua && python tools/regen_service_registry.py

It also prints the ConditionType.ConditionRefresh method id so the constant
in ualab.codec can be checked.
"""

from __future__ import annotations

import sys
from pathlib import Path

# (registry symbol, kind, direction) -- kinds/directions as the flow engine
# counts them; BrowseNext folds into Browse (iterative traversal continuation).
SERVICES = [
    ("GetEndpointsRequest", "GetEndpoints", "Request"),
    ("GetEndpointsResponse", "GetEndpoints", "Response"),
    ("OpenSecureChannelRequest", "OpenSecureChannel", "Request"),
    ("OpenSecureChannelResponse", "OpenSecureChannel", "Response"),
    ("CloseSecureChannelRequest", "CloseSecureChannel", "Request"),
    ("CloseSecureChannelResponse", "CloseSecureChannel", "Response"),
    ("CreateSessionRequest", "CreateSession", "Request"),
    ("CreateSessionResponse", "CreateSession", "Response"),
    ("ActivateSessionRequest", "ActivateSession", "Request"),
    ("ActivateSessionResponse", "ActivateSession", "Response"),
    ("CloseSessionRequest", "CloseSession", "Request"),
    ("CloseSessionResponse", "CloseSession", "Response"),
    ("BrowseRequest", "Browse", "Request"),
    ("BrowseResponse", "Browse", "Response"),
    ("BrowseNextRequest", "Browse", "Request"),
    ("BrowseNextResponse", "Browse", "Response"),
    ("TranslateBrowsePathsToNodeIdsRequest", "TranslateBrowsePaths", "Request"),
    ("TranslateBrowsePathsToNodeIdsResponse", "TranslateBrowsePaths", "Response"),
    ("ReadRequest", "Read", "Request"),
    ("ReadResponse", "Read", "Response"),
    ("WriteRequest", "Write", "Request"),
    ("WriteResponse", "Write", "Response"),
    ("CallRequest", "Call", "Request"),
    ("CallResponse", "Call", "Response"),
    ("CreateMonitoredItemsRequest", "CreateMonitoredItems", "Request"),
    ("CreateMonitoredItemsResponse", "CreateMonitoredItems", "Response"),
    ("CreateSubscriptionRequest", "CreateSubscription", "Request"),
    ("CreateSubscriptionResponse", "CreateSubscription", "Response"),
    ("PublishRequest", "Publish", "Request"),
    ("PublishResponse", "Publish", "Response"),
    ("DeleteSubscriptionsRequest", "DeleteSubscriptions", "Request"),
    ("DeleteSubscriptionsResponse", "DeleteSubscriptions", "Response"),
]

HEADER = """\
# OPC UA service type ids (binary-encoding NodeIds, namespace 0) mapped to
# the service kinds and directions the flow engine counts.
# Regenerate with tools/regen_service_registry.py -- do not hand-edit ids.
# service_id,kind,direction
"""


def load_object_ids():
    try:
        from asyncua.ua.object_ids import ObjectIds  # type: ignore

        return ObjectIds
    except ImportError:
        pass
    try:
        from opcua.ua.object_ids import ObjectIds  # type: ignore

        return ObjectIds
    except ImportError:
        print(
            "no OPC UA stack installed; pip install asyncua (or opcua) first",
            file=sys.stderr,
        )
        sys.exit(1)


def main() -> None:
    ids = load_object_ids()
    rows = []
    for symbol, kind, direction in SERVICES:
        sid = getattr(ids, f"{symbol}_Encoding_DefaultBinary")
        rows.append((sid, kind, direction))
    rows.sort()
    out = Path(__file__).resolve().parents[1] / "src" / "ualab" / "service_ids.csv"
    out.write_text(HEADER + "".join(f"{sid},{kind},{direction}\n" for sid, kind, direction in rows))
    print(f"wrote {len(rows)} entries to {out}")
    refresh = getattr(ids, "ConditionType_ConditionRefresh", None)
    if refresh is not None:
        print(f"ConditionType.ConditionRefresh method id: {refresh}")


if __name__ == "__main__":
    main()
