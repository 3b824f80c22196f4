# scene: living_room.json
table = list(filter(object_set=scene(), category="table"))[0]
# Decide which direction I should go to reach the table
direction = query_relation_agent(object=table)
print(f"Direction of the table relative to my current position: {direction}")
print(f"I should go {' '.join(direction)} to reach the table.")
