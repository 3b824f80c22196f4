# scene: living_room.json
object_set = scene()
chair = list(filter(object_set=object_set, category="chair"))[0]
table = list(filter(object_set=object_set, category="table"))[0]
relation = query_relation(object=chair, reference_object=table)
print(f"The chair is in the direction of {' '.join(relation)} to the table")
