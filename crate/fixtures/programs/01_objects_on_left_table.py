# scene: study_room.json
# Get object set in the scene
object_set = scene()
# Filter all the tables
table_set = filter(object_set=object_set, category="table")
# Find the table on my left
table_left_set = relate_agent(object_set=table_set, relation="left")

# Find objects on top of the table on my left
objects_on_table = set()
for table in table_left_set:
    objects_on_table.update(relate(object_set=object_set, reference_object=table, relation="on"))

# Determine what objects are on top of the table
objects_on_table_category = []
for obj in objects_on_table:
    objects_on_table_category.append(obj.category)
print(f"Objects on top of the table on my left: {objects_on_table_category}")
