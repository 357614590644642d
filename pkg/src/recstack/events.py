"""Shared vocabulary for client events.

The collection endpoint accepts any JSON object (ELT: store first, judge
later); these constants define what downstream stages consider valid.
"""

EVENT_TYPES = ("pageview", "detail", "add", "purchase", "remove")

# Event types that contribute items to session sequences. Pageviews carry no
# sku in our schema and removals are negative signals, so both are excluded.
ITEM_EVENT_TYPES = ("detail", "add", "purchase")
