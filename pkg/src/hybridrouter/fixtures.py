"""Built-in demo intent inventory and knowledge base.

A small customer-support flavored fixture used by the demos, the CLI
defaults, and the test suite. Exemplars within an intent are deliberately
phrased with heavy token overlap so that replaying an exemplar scores
inside the FAQ band against the intent centroid under the reference
embedder; knowledge-base bodies are kept to at most three sentences so
the extractive generator emits whole documents deterministically.
"""

from __future__ import annotations

from .intent_store import IntentRecord, IntentStore
from .retrieval import Document, DocumentIndex, make_document

_INTENTS: list[tuple[str, str, list[str], str]] = [
    (
        "password_reset",
        "Reset a password",
        [
            "how do i reset my password",
            "how can i reset my password",
            "i need to reset my password please",
        ],
        "To reset your password open the sign in page, choose forgot password, "
        "and follow the reset link we email you. The reset link stays valid for "
        "thirty minutes and your new password must be at least twelve characters.",
    ),
    (
        "billing_invoice",
        "Find a billing invoice",
        [
            "where can i find my billing invoice",
            "how do i find my billing invoice",
            "i want to find my billing invoice",
        ],
        "Your billing invoices live under account settings in the billing tab. "
        "Every invoice can be downloaded as a pdf, and the billing tab also shows "
        "payment history, due dates, and the card we charge.",
    ),
    (
        "api_keys",
        "Create an API key",
        [
            "how do i create a new api key",
            "how can i create a new api key",
            "create a new api key for me please",
        ],
        "To create a new api key open the developer console, select api keys, and "
        "press the create key button. Store the generated api key secret somewhere "
        "safe because the console only displays it once.",
    ),
    (
        "autoscaling_setup",
        "Integrate autoscaling",
        [
            "how do i integrate autoscaling",
            "how can i integrate autoscaling",
            "how do i integrate autoscaling for my instances",
        ],
        "To integrate autoscaling attach a scaling policy to your instance group, "
        "set minimum and maximum instance counts, and pick a target metric such as "
        "cpu utilization. The autoscaling policy evaluates the metric every minute "
        "and adds or removes instances to follow it.",
    ),
    (
        "account_close",
        "Close an account",
        [
            "how do i close my account",
            "how can i close my account",
            "i want to close my account now",
        ],
        "To close your account open account settings, choose close account, and "
        "confirm with your password. We keep your data for thirty days after the "
        "account closes in case you change your mind, then it is deleted.",
    ),
    (
        "upgrade_plan",
        "Upgrade a subscription plan",
        [
            "how do i upgrade my subscription plan",
            "how can i upgrade my subscription plan",
            "upgrade my subscription plan please",
        ],
        "To upgrade your subscription plan open the plans page, compare the tiers, "
        "and press upgrade on the plan you want. The price difference is prorated "
        "for the current cycle and the new plan limits apply immediately.",
    ),
    (
        "dashboard_analytics",
        "Enable dashboard analytics",
        [
            "how do i enable advanced analytics on the dashboard",
            "how can i enable advanced analytics on my dashboard",
            "enable advanced analytics in the dashboard settings",
        ],
        "Advanced analytics can be enabled from the dashboard settings panel under "
        "the analytics section. Once enabled the dashboard shows engagement, "
        "retention, and revenue metrics with daily granularity, and the analytics "
        "data starts collecting within one hour.",
    ),
    (
        "support_contact",
        "Contact customer support",
        [
            "how do i contact customer support",
            "how can i contact customer support",
            "contact customer support please",
        ],
        "You can contact customer support through the help widget in the lower "
        "corner of every page or by mailing the support address on the contact "
        "page. Support replies within one business day and urgent incidents get a "
        "priority queue.",
    ),
]

_KB_DOCS: list[tuple[str, str, str]] = [
    (
        "kb-scaling-policies",
        "scaling policies for compute instances",
        "A scaling policy watches a target metric on your compute instances and "
        "changes the instance count to follow it. Step policies add a fixed number "
        "of instances when the metric crosses a bound, while target tracking "
        "policies hold the metric near a chosen value. Cooldown windows stop a "
        "scaling policy from reacting twice to the same spike.",
    ),
    (
        "kb-analytics-metrics",
        "dashboard analytics metrics catalog",
        "The analytics catalog covers engagement, retention, and revenue metrics "
        "computed daily for every dashboard. Engagement counts active sessions, "
        "retention follows returning users across weeks, and revenue sums settled "
        "payments. Each metric in the catalog can be exported from the dashboard "
        "as csv.",
    ),
    (
        "kb-invoice-disputes",
        "billing invoice disputes and adjustments",
        "A billing invoice can be disputed within sixty days of its issue date "
        "from the billing tab. Disputed invoice lines are frozen while finance "
        "reviews the adjustment request. Approved adjustments appear as credit on "
        "the next invoice.",
    ),
    (
        "kb-key-rotation",
        "api key rotation practices",
        "Rotate every api key at least quarterly and immediately after a suspected "
        "leak. Create the replacement api key first, move traffic over, then "
        "revoke the old key from the developer console. Automated rotation can be "
        "scheduled with the keys endpoint.",
    ),
    (
        "kb-plan-limits",
        "subscription plan limits comparison",
        "Each subscription plan sets limits on seats, projects, and monthly api "
        "calls. The starter plan fits a single team, the growth plan raises every "
        "limit tenfold, and the enterprise plan removes the caps. Exceeding a plan "
        "limit pauses new writes until the next cycle or an upgrade.",
    ),
    (
        "kb-storage-replication",
        "object storage cross region replication",
        "Cross region replication copies every object from a source storage bucket "
        "to a bucket in another region. Replication rules pick objects by prefix "
        "and apply to new writes after the rule is saved. Existing objects can be "
        "copied with a one time batch replication job.",
    ),
    (
        "kb-data-compliance",
        "data compliance requirements and certifications",
        "The platform holds soc2 type two and iso 27001 certifications covering "
        "all regions. Customer data stays inside the region you pick and "
        "compliance reports can be downloaded under the trust page. Encryption at "
        "rest uses keys rotated by the platform every ninety days.",
    ),
    (
        "kb-vpn-gateways",
        "vpn gateway tunnels to private networks",
        "A vpn gateway terminates ipsec tunnels between your private network and "
        "the platform. Each gateway supports up to ten tunnels and advertises "
        "routes over bgp. Tunnel health shows in the network console with per "
        "tunnel latency graphs.",
    ),
    (
        "kb-cluster-nodes",
        "kubernetes cluster node pools",
        "A kubernetes cluster groups worker machines into node pools that share a "
        "machine shape. Node pools can autoscale separately and drain safely "
        "during upgrades. Taints on a node pool steer workloads to the right "
        "machines.",
    ),
    (
        "kb-database-backups",
        "automated database backups and retention",
        "Automated database backups run nightly and keep thirty daily snapshots by "
        "default. Point in time recovery replays the write ahead log between "
        "snapshots. Restores create a fresh database instance and never overwrite "
        "the source.",
    ),
    (
        "kb-audit-events",
        "audit log event streaming",
        "Every administrative action lands in the audit log within seconds. Audit "
        "events can stream to your own bucket or a webhook, and each event "
        "carries the actor, the action, and the affected resource. Audit history "
        "is retained for one year.",
    ),
    (
        "kb-quota-increases",
        "service quota increase requests",
        "Service quotas cap concurrent instances, storage volume counts, and "
        "network bandwidth per region. Quota increase requests go through the "
        "limits page and most approvals finish within one business day. Emergency "
        "quota increases can be flagged for a faster review.",
    ),
]


def demo_intent_records() -> list[IntentRecord]:
    return [
        IntentRecord(
            intent_id=intent_id,
            display_name=display_name,
            exemplar_texts=list(exemplars),
            canned_response=canned,
        )
        for intent_id, display_name, exemplars, canned in _INTENTS
    ]


def build_demo_store(provider, **store_kwargs) -> IntentStore:
    store = IntentStore(provider, **store_kwargs)
    for record in demo_intent_records():
        store.upsert_intent(record)
    return store


def build_demo_kb(provider) -> list[Document]:
    return [make_document(doc_id, title, body, provider) for doc_id, title, body in _KB_DOCS]


def build_demo_index(provider) -> DocumentIndex:
    return DocumentIndex(build_demo_kb(provider))
