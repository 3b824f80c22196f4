# scene: living_room.json
table = list(filter(object_set=scene(), category="table"))[0]
# Decide whether the table is in front of me or behind
direction = query_relation_agent(object=table, candidate_relations=["front", "behind"])
print(f"Direction of the table relative to my current position: {' '.join(direction)}")
