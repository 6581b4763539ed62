# Bundled word lists for lexicon-free noun filtering.

STOPWORDS = frozenset("""
a an the this that these those there here it its it's they them their theirs he him his she her hers
we us our ours you your yours i me my mine one ones some any all each every both either neither
no not nor and or but if then so than too very just only also else of off
""".split())

WH_WORDS = frozenset("what which who whom whose where when why how".split())

AUXILIARIES = frozenset("""
is are was were be been being am do does did done has have had having can could will would shall should
may might must isn't aren't wasn't weren't don't doesn't didn't can't couldn't won't wouldn't
""".split())

PREPOSITIONS = frozenset("""
about above across after against along among around at before behind below beneath beside besides
between beyond by down during for from in inside into near next of off on onto out outside over
past per since through throughout to toward towards under underneath until up upon with within without
""".split())

DETERMINERS = frozenset("a an the this that these those each every some any no many much few several".split())

PRONOUNS = frozenset("""
i me my mine myself you your yours yourself he him his himself she her hers herself it its itself
we us our ours ourselves they them their theirs themselves someone something anyone anything
""".split())

# Question-frequent verbs and participles, excluded from noun queries.
VERBS = frozenset("""
wear wears wearing worn hold holds holding held play plays playing played stand stands standing stood
sit sits sitting sat fly flies flying flew eat eats eating ate ride rides riding rode do doing
look looks looking walk walks walking run runs running lie lies lying lay laying carry carries carrying
use uses using used make makes making made call called show shows shown pictured picture taken take takes
taking brush brushes brushing watch watching cut cutting hit hitting throw throwing thrown catch catching
drink drinking go going gone went see seen seeing say said get getting got put putting move moving
cook cooking hang hanging park parked parking cross crossing swing swinging jump jumping
""".split())

CLOSED_CLASS = WH_WORDS | AUXILIARIES | PREPOSITIONS | DETERMINERS | PRONOUNS

# Lowercase common nouns accepted as article titles.
COMMON_NOUNS = frozenset("""
airplane animal apple art ball banana bat bathroom beach bear bed bench bicycle bike bird boat book
bottle bowl box boy bread bridge broccoli building bus cake camera car carrot cat chair cheese child
city clock cloud coffee color computer cow cup desk dog donut door elephant field fire flower food
fork frisbee fruit game giraffe girl glass grass ground hair hand hat head helmet horse hot house
keyboard kitchen kite knife lamp laptop light man meat motorcycle mountain mouse onion orange oven
paper park pepper person phone picture pizza plane plant plate player pole racket road rock room
sandwich sea sheep shirt sign sink skateboard ski sky snow sofa spoon sport street suitcase surfboard
table tennis toilet toothbrush tower toy track traffic train tree truck umbrella vase vegetable wall
water window woman wood zebra protection safety topping
""".split())
